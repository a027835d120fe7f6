//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed. All comparisons are exact rationals.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use discsched::automata::{alt_lasso_value, apply_quality_op, dealternate, lasso_value, optimal_value};
use discsched::bench::{gen_random_kripke, peak_rss_mb, size_cell, SizeCell};
use discsched::formula::{parse_formula, QualityOp};
use discsched::scheduler::{eval_word, schedule, KripkeStructure};
use discsched::semiring::{fuzzy_lasso_value, nondeterminize, Fuzzy};
use discsched::translate::{translate_over, Margin};
use discsched::values::Rat01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        ok: false,
        detail: detail.into(),
    }
}

fn sandwich() -> Outcome {
    let formulas = [
        "F{1/2} p1",
        "F{1/2} G{1/2} p1",
        "avg(F{1/2} p1, F{1/2} p2)",
        "avg(F{1/2} p1, G{1/2} p2)",
    ];
    let aps = vec!["p1".to_string(), "p2".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let words: Vec<_> = (0..50).map(|_| random_word(&mut rng, 4, 4, 4)).collect();
    let mut checks = 0;
    for text in formulas {
        let phi = parse_formula(text).unwrap();
        for eps in [Margin::frac(1, 10), Margin::frac(1, 50)] {
            let alt = translate_over(&phi, &eps, &aps, Default::default()).unwrap();
            let na = dealternate(&alt);
            for w in &words {
                let exact = eval_word(w, &aps, &phi);
                let lower = exact.monus(eps.value());
                for (how, v) in [
                    ("alternating", alt_lasso_value(&alt, w).unwrap()),
                    ("dealternated", lasso_value(&na, w).unwrap()),
                ] {
                    if v < lower || v > exact {
                        return fail(format!(
                            "{text}, ε={eps}, word {w:?}: {how} value {v} outside [{lower}, {exact}]"
                        ));
                    }
                    checks += 1;
                }
            }
        }
    }
    pass(format!("{checks} exact comparisons"))
}

fn example_structure() -> Outcome {
    let k = KripkeStructure::parse_kts(
        "aps p\nstate s0 {}\nstate s1 {p}\nstate s2 {}\nedge s0 s0\nedge s0 s1\nedge s1 s2\nedge s2 s2\n",
    )
    .unwrap();
    let phi = parse_formula("G{1/2} F p").unwrap();
    let mut seen = Vec::new();
    for (p, q) in [(1, 2), (1, 8), (1, 32)] {
        let eps = Margin::frac(p, q);
        let res = schedule(&k, &phi, &eps).unwrap();
        let v = &res.exact_value;
        let good = res.path.validate(&k).is_ok()
            && *v >= Rat01::one().monus(eps.value())
            && *v < Rat01::one()
            && res.sup_interval.1 <= Rat01::one()
            && res.guaranteed_lb <= *v;
        if !good {
            return fail(format!("ε={eps}: value {v}, path {}", res.path.display(&k)));
        }
        seen.push(format!("ε={eps} → {v}"));
    }
    pass(seen.join(", "))
}

/// Reference sizes from an earlier implementation: (formula, [(alt, na)
/// per ε ∈ {1/10, 1/50, 1/100}]), `None` where that run timed out.
const REFERENCE_SIZES: [(&str, [Option<(usize, usize)>; 3]); 7] = [
    ("F{1/2} p1", [Some((5, 10)), Some((7, 14)), Some((8, 16))]),
    ("F{99/100} p1", [Some((231, 462)), Some((391, 782)), Some((460, 920))]),
    ("F{1/2} G{1/2} p1", [Some((15, 36)), Some((28, 85)), Some((36, 121))]),
    ("avg(F{1/2} p1, F{1/2} p2)", [Some((33, 128)), Some((61, 1859)), Some((78, 7421))]),
    ("avg(F{1/2} p1, G{1/2} p2)", [Some((29, 272)), Some((55, 6659)), Some((71, 32703))]),
    ("avg(F{3/5} p1, F{3/5} p2)", [Some((46, 477)), Some((97, 29655)), None]),
    ("F (avg(G p1, F{1/2} p2))", [Some((14, 19)), Some((20, 27)), Some((23, 31))]),
];

fn within_factor_two(ours: usize, theirs: usize) -> bool {
    ours <= 2 * theirs && theirs <= 2 * ours
}

fn reference_sizes() -> Outcome {
    let eps = [Margin::frac(1, 10), Margin::frac(1, 50), Margin::frac(1, 100)];
    let mut misses = Vec::new();
    let mut monotone = true;
    let mut lines = Vec::new();
    for (text, reference) in REFERENCE_SIZES {
        let phi = parse_formula(text).unwrap();
        let mut prev: Option<(usize, usize)> = None;
        let mut cells = Vec::new();
        for (e, theirs) in eps.iter().zip(reference) {
            let cell = size_cell(&phi, e, Duration::from_secs(120));
            let ours = match cell {
                SizeCell::Done {
                    alternating,
                    nondeterministic,
                } => (alternating, nondeterministic),
                SizeCell::Timeout if theirs.is_none() => {
                    cells.push("timeout/timeout".to_string());
                    continue;
                }
                other => return fail(format!("{text}, ε={e}: {other:?}")),
            };
            if let Some((pa, pn)) = prev {
                monotone &= ours.0 >= pa && ours.1 >= pn;
            }
            prev = Some(ours);
            let mark = |o: usize, t: usize, what: &str, misses: &mut Vec<String>| {
                if within_factor_two(o, t) {
                    format!("{o}")
                } else {
                    misses.push(format!("{text} ε={e} {what}: {o} vs {t}"));
                    format!("{o}!")
                }
            };
            match theirs {
                Some((ta, tn)) => {
                    let a = mark(ours.0, ta, "alt", &mut misses);
                    let n = mark(ours.1, tn, "na", &mut misses);
                    cells.push(format!("{a}/{n} (reference {ta}/{tn})"));
                }
                None => cells.push(format!("{}/{} (reference timeout)", ours.0, ours.1)),
            }
        }
        lines.push(format!("    {text}: {}", cells.join(", ")));
    }
    println!("{}", lines.join("\n"));
    if !monotone {
        return fail("sizes do not grow monotonically in 1/ε");
    }
    if misses.is_empty() {
        pass("all cells within a factor of 2, monotone in 1/ε")
    } else {
        fail(format!(
            "monotone in 1/ε; {} cell(s) outside a factor of 2: {}",
            misses.len(),
            misses.join("; ")
        ))
    }
}

fn optimal_value_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lassos = [all_lassos(1, 6, 6), all_lassos(2, 6, 6)];
    for i in 0..100 {
        let letters = rng.gen_range(1..=2);
        let a = random_nfa(&mut rng, 6, letters, &QUARTERS);
        let (value, run) = optimal_value(&a);
        let best = lassos[letters - 1]
            .iter()
            .map(|w| lasso_value(&a, w).unwrap())
            .max()
            .unwrap();
        if value != best || !run.is_run_of(&a) || lasso_value(&a, &run.word).unwrap() != value {
            return fail(format!("automaton {i}: optimal_value {value}, exhaustive {best}"));
        }
    }
    pass(format!("100 automata, {} lassos over two letters", lassos[1].len()))
}

fn dealternation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..50 {
        let letters = rng.gen_range(1..=2);
        let a = random_alternating(&mut rng, 4, letters, 2, &THIRDS);
        let na = dealternate(&a);
        for _ in 0..20 {
            let w = random_word(&mut rng, letters, 4, 4);
            let (x, y) = (alt_lasso_value(&a, &w).unwrap(), lasso_value(&na, &w).unwrap());
            if x != y {
                return fail(format!("automaton {i}, word {w:?}: alternating {x}, dealternated {y}"));
            }
        }
    }
    pass("50 automata × 20 lassos")
}

fn operator_product() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ops = [QualityOp::avg(), QualityOp::min(), QualityOp::max()];
    for i in 0..50 {
        let op = &ops[i % 3];
        let a1 = random_nfa(&mut rng, 4, 2, &QUARTERS);
        let a2 = random_nfa(&mut rng, 4, 2, &QUARTERS);
        let w = random_word(&mut rng, 2, 4, 4);
        let prod = apply_quality_op(op, &[a1.clone(), a2.clone()]).unwrap();
        let lhs = lasso_value(&prod, &w).unwrap();
        let rhs = op
            .eval(&[lasso_value(&a1, &w).unwrap(), lasso_value(&a2, &w).unwrap()])
            .unwrap();
        if lhs != rhs {
            return fail(format!("triple {i} ({}): product {lhs}, pointwise {rhs}", op.name()));
        }
    }
    pass("50 triples over avg, min, max")
}

fn fuzzy_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50 {
        let a = random_fuzzy(&mut rng, 4, 2);
        let na = nondeterminize(&Fuzzy, &a).unwrap();
        for _ in 0..20 {
            let w = random_word(&mut rng, 2, 4, 4);
            let (x, y) = (fuzzy_lasso_value(&a, &w).unwrap(), lasso_value(&na, &w).unwrap());
            if x != y {
                return fail(format!("automaton {i}, word {w:?}: weighted {x}, reduced {y}"));
            }
        }
    }
    pass("50 automata × 20 lassos")
}

/// Position `i` of the eventually periodic sequence `u v^ω`.
fn at(u: &[Rat01], v: &[Rat01], i: usize) -> Rat01 {
    if i < u.len() {
        u[i].clone()
    } else {
        v[(i - u.len()) % v.len()].clone()
    }
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rand_seq = |rng: &mut ChaCha8Rng, len: usize| -> Vec<Rat01> {
        (0..len)
            .map(|_| {
                let q = rng.gen_range(1..=12);
                Rat01::frac(rng.gen_range(0..=q), q)
            })
            .collect()
    };
    for i in 0..500 {
        let (pu, pv) = (rng.gen_range(0..=4), rng.gen_range(1..=4));
        let (au, av) = (rand_seq(&mut rng, pu), rand_seq(&mut rng, pv));
        let (bu, bv) = (rand_seq(&mut rng, pu), rand_seq(&mut rng, pv));
        // running max/min settle after one full pass, later indices repeat
        let horizon = pu + 2 * pv;
        let mut lhs = Rat01::one();
        let mut run_max = Rat01::zero();
        for k in 0..horizon {
            lhs = lhs.min(at(&bu, &bv, k).max(run_max.clone()));
            run_max = run_max.max(at(&au, &av, k));
        }
        let mut sup = Rat01::zero();
        let mut run_min = Rat01::one();
        for k in 0..horizon {
            run_min = run_min.min(at(&bu, &bv, k));
            sup = sup.max(at(&au, &av, k).min(run_min.clone()));
        }
        let inf_b = bu.iter().chain(&bv).min().unwrap().clone();
        let rhs = sup.max(inf_b);
        if lhs != rhs {
            return fail(format!("pair {i}: {lhs} vs {rhs}"));
        }
    }
    pass("500 sequence pairs")
}

fn performance() -> Outcome {
    let phi = parse_formula("avg(G{1/2} p1, G{1/2} p2)").unwrap();
    let aps: Vec<String> = vec!["p1".into(), "p2".into()];
    let k = gen_random_kripke(100, 3, &aps, 42);
    let start = Instant::now();
    let res = schedule(&k, &phi, &Margin::frac(1, 10));
    let secs = start.elapsed().as_secs_f64();
    let mem = peak_rss_mb().map_or("n/a".to_string(), |m| format!("{m:.1} MB peak RSS"));
    match res {
        Ok(r) if secs < 60.0 && r.path.validate(&k).is_ok() => {
            pass(format!("{secs:.3} s, {mem}, value {}", r.exact_value))
        }
        Ok(_) => fail(format!("{secs:.3} s")),
        Err(e) => fail(e.to_string()),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("sandwich correctness", sandwich),
        ("example structure, G{1/2} F p", example_structure),
        ("automaton sizes vs reference sizes", reference_sizes),
        ("optimal value vs exhaustive lassos", optimal_value_oracle),
        ("dealternation preserves the language", dealternation),
        ("monotone operator product", operator_product),
        ("fuzzy automaton reduction", fuzzy_reduction),
        ("until/release duality", duality),
        ("performance envelope", performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let verdict = if out.ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {} ({name}): {verdict} [{:.1} s] {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
        failed += usize::from(!out.ok);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
