#![allow(dead_code)]

use std::collections::HashSet;

use discsched::automata::{AcceptanceAutomaton, Alphabet, AlternatingAutomaton, Conjunct, Dnf, LassoWord};
use discsched::semiring::WeightedAutomaton;
use discsched::values::Rat01;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn r(p: u64, q: u64) -> Rat01 {
    Rat01::frac(p, q)
}

pub const QUARTERS: [(u64, u64); 5] = [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)];
pub const THIRDS: [(u64, u64); 4] = [(0, 1), (1, 3), (2, 3), (1, 1)];

pub fn pick(rng: &mut impl Rng, grid: &[(u64, u64)]) -> Rat01 {
    let (p, q) = *grid.choose(rng).unwrap();
    r(p, q)
}

/// Nonempty random subset of `0..n`.
pub fn nonempty_subset(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    loop {
        let s: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

pub fn random_word(rng: &mut impl Rng, letters: usize, max_u: usize, max_v: usize) -> LassoWord {
    let u = (0..rng.gen_range(0..=max_u)).map(|_| rng.gen_range(0..letters)).collect();
    let v = (0..rng.gen_range(1..=max_v)).map(|_| rng.gen_range(0..letters)).collect();
    LassoWord::new(u, v).unwrap()
}

/// Shortest prefix and primitive cycle describing the same ω-word.
pub fn canonical(mut u: Vec<usize>, mut v: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
    let n = v.len();
    if let Some(d) = (1..=n).find(|&d| n.is_multiple_of(d) && (d..n).all(|i| v[i] == v[i - d])) {
        v.truncate(d);
    }
    while let (Some(a), Some(b)) = (u.last(), v.last()) {
        if a != b {
            break;
        }
        u.pop();
        v.rotate_right(1);
    }
    (u, v)
}

fn all_strings(letters: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..letters).map(move |a| {
                    let mut t = s.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

/// Every ω-word `u v^ω` with `|u| ≤ max_u` and `1 ≤ |v| ≤ max_v`, each
/// listed once in canonical form.
pub fn all_lassos(letters: usize, max_u: usize, max_v: usize) -> Vec<LassoWord> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for lu in 0..=max_u {
        for u in all_strings(letters, lu) {
            for lv in 1..=max_v {
                for v in all_strings(letters, lv) {
                    let c = canonical(u.clone(), v);
                    if seen.insert(c.clone()) {
                        out.push(LassoWord::new(c.0, c.1).unwrap());
                    }
                }
            }
        }
    }
    out
}

pub fn random_nfa(rng: &mut impl Rng, max_states: usize, letters: usize, grid: &[(u64, u64)]) -> AcceptanceAutomaton {
    let n = rng.gen_range(1..=max_states);
    let delta = (0..n)
        .map(|_| (0..letters).map(|_| nonempty_subset(rng, n)).collect())
        .collect();
    AcceptanceAutomaton::new(
        Alphabet::symbols(letters),
        (0..n).map(|q| format!("q{q}")).collect(),
        nonempty_subset(rng, n),
        delta,
        (0..n).map(|_| pick(rng, grid)).collect(),
    )
    .unwrap()
}

pub fn random_alternating(
    rng: &mut impl Rng,
    max_states: usize,
    letters: usize,
    max_disjuncts: usize,
    grid: &[(u64, u64)],
) -> AlternatingAutomaton {
    let n = rng.gen_range(1..=max_states);
    let delta = (0..n)
        .map(|_| {
            (0..letters)
                .map(|_| {
                    let k = rng.gen_range(1..=max_disjuncts);
                    let ds = (0..k)
                        .map(|_| {
                            let states = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
                            Conjunct::new(states, pick(rng, grid))
                        })
                        .collect();
                    Dnf::from_disjuncts(ds)
                })
                .collect()
        })
        .collect();
    AlternatingAutomaton::new(
        Alphabet::symbols(letters),
        (0..n).map(|q| format!("q{q}")).collect(),
        nonempty_subset(rng, n),
        delta,
        (0..n).map(|_| pick(rng, grid)).collect(),
    )
    .unwrap()
}

pub fn random_fuzzy(rng: &mut impl Rng, max_states: usize, letters: usize) -> WeightedAutomaton {
    let n = rng.gen_range(1..=max_states);
    let delta = (0..n)
        .map(|_| {
            (0..letters)
                .map(|_| (0..n).map(|t| (t, pick(rng, &QUARTERS))).collect())
                .collect()
        })
        .collect();
    WeightedAutomaton::new(
        Alphabet::symbols(letters),
        (0..n).map(|q| format!("q{q}")).collect(),
        (0..n).map(|_| pick(rng, &QUARTERS)).collect(),
        delta,
        (0..n).map(|_| pick(rng, &QUARTERS)).collect(),
    )
    .unwrap()
}
