//! Random Kripke structures and the size / time benchmarks.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::automata::{dealternate_with, AutomatonError, DealternateOptions};
use crate::formula::{parse_formula, Formula, FormulaError};
use crate::scheduler::{schedule_with, KripkeStructure, ScheduleError};
use crate::translate::{translate_with, Margin, TranslateError};

/// `n` states; each state draws an out-degree uniformly from `1..=max_deg`
/// and then that many targets uniformly (repeats collapse). Every
/// proposition holds in a state with probability 1/2.
pub fn gen_random_kripke(n: usize, max_deg: usize, aps: &[String], seed: u64) -> KripkeStructure {
    assert!(n >= 1 && max_deg >= 1, "size and degree must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut succ = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let deg = rng.gen_range(1..=max_deg);
        succ.push((0..deg).map(|_| rng.gen_range(0..n)).collect());
        labels.push((0..aps.len()).fold(0u64, |m, i| if rng.gen_bool(0.5) { m | 1 << i } else { m }));
    }
    let names = (0..n).map(|i| format!("s{i}")).collect();
    KripkeStructure::new(aps.to_vec(), names, labels, succ, None).expect("generator output is well formed")
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub formula: String,
    pub eps: Vec<Margin>,
    pub sizes: Vec<usize>,
    pub degrees: Vec<usize>,
    pub instances: usize,
    pub seed: u64,
    pub timeout: Duration,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sizes.contains(&0) {
            return Err("Kripke sizes must be at least 1".into());
        }
        if self.degrees.contains(&0) {
            return Err("degrees must be at least 1".into());
        }
        if self.instances == 0 {
            return Err("instance count must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SizeCell {
    Done { alternating: usize, nondeterministic: usize },
    Timeout,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SizeRow {
    pub formula: String,
    pub cells: Vec<SizeCell>,
}

/// `|A_{φ,ε}|` and `|A^na_{φ,ε}|` for one formula and margin, giving up at
/// the timeout.
pub fn size_cell(phi: &Formula, eps: &Margin, timeout: Duration) -> SizeCell {
    let opts = DealternateOptions::with_deadline(Some(Instant::now() + timeout));
    let run = || -> Result<(usize, usize), TranslateError> {
        let alt = translate_with(phi, eps, opts)?;
        let na = dealternate_with(&alt, opts)?;
        Ok((alt.num_states(), na.num_states()))
    };
    match run() {
        Ok((alternating, nondeterministic)) => SizeCell::Done {
            alternating,
            nondeterministic,
        },
        Err(TranslateError::Automaton(AutomatonError::Timeout)) => SizeCell::Timeout,
        Err(e) => SizeCell::Failed { reason: e.to_string() },
    }
}

pub fn size_table(formulas: &[String], eps: &[Margin], timeout: Duration) -> Result<Vec<SizeRow>, FormulaError> {
    formulas
        .iter()
        .map(|text| {
            let phi = parse_formula(text)?;
            Ok(SizeRow {
                formula: text.clone(),
                cells: eps.iter().map(|e| size_cell(&phi, e, timeout)).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub epsilon: String,
    pub states: usize,
    pub degree: usize,
    pub completed: usize,
    pub timeouts: usize,
    pub mean_secs: Option<f64>,
    pub mean_mb: Option<f64>,
}

/// Mean wall-clock time and peak memory of [`schedule_with`] over random
/// structures, one row per (ε, size, degree). Instance `i` of a cell uses
/// seed `seed + i`, so size columns are reproducible.
pub fn time_table(cfg: &BenchConfig) -> Result<Vec<TimeRow>, ScheduleError> {
    let phi = parse_formula(&cfg.formula).map_err(TranslateError::from)?;
    let aps: Vec<String> = phi.atoms().into_iter().collect();
    let mut rows = Vec::new();
    for eps in &cfg.eps {
        for &n in &cfg.sizes {
            for &deg in &cfg.degrees {
                let (mut secs, mut mb, mut mb_count) = (0.0, 0.0, 0usize);
                let (mut done, mut timeouts) = (0, 0);
                for i in 0..cfg.instances {
                    let k = gen_random_kripke(n, deg, &aps, cfg.seed.wrapping_add(i as u64));
                    reset_peak_rss();
                    let start = Instant::now();
                    let opts = DealternateOptions::with_deadline(Some(start + cfg.timeout));
                    match schedule_with(&k, &phi, eps, opts) {
                        Ok(_) => {
                            done += 1;
                            secs += start.elapsed().as_secs_f64();
                            if let Some(m) = peak_rss_mb() {
                                mb += m;
                                mb_count += 1;
                            }
                        }
                        Err(e) if is_timeout(&e) => timeouts += 1,
                        Err(e) => return Err(e),
                    }
                }
                rows.push(TimeRow {
                    epsilon: eps.to_string(),
                    states: n,
                    degree: deg,
                    completed: done,
                    timeouts,
                    mean_secs: (done > 0).then(|| secs / done as f64),
                    mean_mb: (mb_count > 0).then(|| mb / mb_count as f64),
                });
            }
        }
    }
    Ok(rows)
}

pub fn is_timeout(e: &ScheduleError) -> bool {
    matches!(
        e,
        ScheduleError::Automaton(AutomatonError::Timeout)
            | ScheduleError::Translate(TranslateError::Automaton(AutomatonError::Timeout))
    )
}

/// Peak resident set size of this process in MB (Linux only).
pub fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Reset the peak RSS counter so the next reading covers one instance.
/// Silently does nothing where unsupported.
pub fn reset_peak_rss() {
    let _ = std::fs::write("/proc/self/clear_refs", "5");
}

fn size_cell_text(c: &SizeCell) -> (String, String) {
    match c {
        SizeCell::Done {
            alternating,
            nondeterministic,
        } => (alternating.to_string(), nondeterministic.to_string()),
        SizeCell::Timeout => ("timeout".into(), "timeout".into()),
        SizeCell::Failed { .. } => ("error".into(), "error".into()),
    }
}

/// Table of automaton sizes: one row per formula, two columns per margin.
pub fn size_report_csv(eps: &[Margin], rows: &[SizeRow]) -> String {
    let mut out = String::from("formula");
    for e in eps {
        let _ = write!(out, ",alt {e},na {e}");
    }
    out.push('\n');
    for row in rows {
        out.push_str(&csv_field(&row.formula));
        for c in &row.cells {
            let (a, b) = size_cell_text(c);
            let _ = write!(out, ",{a},{b}");
        }
        out.push('\n');
    }
    out
}

pub fn size_report_markdown(eps: &[Margin], rows: &[SizeRow]) -> String {
    let mut out = String::from("| formula |");
    for e in eps {
        let _ = write!(out, " alt ε={e} | na ε={e} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(2 * eps.len()));
    out.push('\n');
    for row in rows {
        let _ = write!(out, "| `{}` |", row.formula);
        for c in &row.cells {
            let (a, b) = size_cell_text(c);
            let _ = write!(out, " {a} | {b} |");
        }
        out.push('\n');
    }
    out
}

fn opt_num(x: Option<f64>, digits: usize, missing: &str) -> String {
    x.map_or_else(|| missing.to_string(), |v| format!("{v:.digits$}"))
}

/// Table of mean time and space per (ε, size, degree).
pub fn time_report_csv(rows: &[TimeRow]) -> String {
    let mut out = String::from("epsilon,states,degree,completed,timeouts,time_s,space_mb\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epsilon,
            r.states,
            r.degree,
            r.completed,
            r.timeouts,
            opt_num(r.mean_secs, 6, "timeout"),
            opt_num(r.mean_mb, 3, "n/a")
        );
    }
    out
}

pub fn time_report_markdown(rows: &[TimeRow]) -> String {
    let mut out = String::from(
        "| ε | states | max degree | completed | timeouts | time (s) | space (MB) |\n|---|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.epsilon,
            r.states,
            r.degree,
            r.completed,
            r.timeouts,
            opt_num(r.mean_secs, 6, "timeout"),
            opt_num(r.mean_mb, 3, "n/a")
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
