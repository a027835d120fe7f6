use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use discsched::automata::{
    acceptance_to_dot, alternating_to_dot, dealternate_with, optimal_value, Alphabet, AutomatonError,
    AutomatonFile, DealternateOptions, LassoWord,
};
use discsched::bench::{
    gen_random_kripke, is_timeout, size_report_csv, size_report_markdown, size_table, time_report_csv,
    time_report_markdown, time_table, BenchConfig,
};
use discsched::formula::{parse_formula, Formula};
use discsched::scheduler::{eval_path, eval_word, schedule_with, KripkeStructure, LassoPath};
use discsched::translate::{translate_with, translation_stats, Margin, TranslateError};

const TIMEOUT_ENV: &str = "DISCSCHED_TIMEOUT_SECS";

#[derive(Parser)]
#[command(name = "discsched", version, about = "Near-optimal scheduling for discounted LTL")]
struct Cli {
    /// Wall-clock limit in seconds; the DISCSCHED_TIMEOUT_SECS variable wins
    #[arg(long, global = true)]
    timeout: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find a path of a Kripke structure whose value is within ε of the best
    Schedule {
        #[arg(short, long)]
        formula: String,
        /// Kripke structure, `.kts` text or JSON
        #[arg(short, long)]
        kripke: PathBuf,
        #[arg(short, long)]
        eps: Margin,
        #[arg(long)]
        json: bool,
    },
    /// Translate a formula into an automaton
    Translate {
        #[arg(short, long)]
        formula: String,
        #[arg(short, long)]
        eps: Margin,
        /// Print state counts instead of the automaton
        #[arg(long)]
        stats: bool,
        /// Emit Graphviz instead of JSON
        #[arg(long)]
        dot: bool,
        /// Export the dealternated automaton
        #[arg(long)]
        na: bool,
        #[arg(long)]
        json: bool,
    },
    /// Exact truth value of a formula on a lasso
    Eval {
        #[arg(short, long)]
        formula: String,
        /// State names `u… ; v…`, needs --kripke
        #[arg(long, requires = "kripke", conflicts_with = "word")]
        path: Option<String>,
        #[arg(short, long)]
        kripke: Option<PathBuf>,
        /// Letters such as `{} {p} ; {p,q}`
        #[arg(long)]
        word: Option<String>,
    },
    /// Optimal value and witness of an automaton file
    Optimum {
        #[arg(short, long)]
        automaton: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Size or time benchmarks; prints markdown and optionally writes CSV
    Bench {
        #[arg(long, value_enum, default_value_t = BenchKind::Sizes)]
        kind: BenchKind,
        /// Repeat for several formulas (sizes only)
        #[arg(short, long, required = true)]
        formula: Vec<String>,
        #[arg(short, long, value_delimiter = ',', default_value = "1/10,1/50,1/100")]
        eps: Vec<Margin>,
        #[arg(long, value_delimiter = ',', default_value = "100,200")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3,10")]
        degrees: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for report.csv and report.md
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Random Kripke structure in `.kts` form
    GenKripke {
        #[arg(short, long)]
        states: usize,
        #[arg(short, long)]
        degree: usize,
        #[arg(long, value_delimiter = ',', default_value = "p1,p2")]
        aps: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Sizes,
    Time,
}

enum Failure {
    Input(String),
    Timeout,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

fn timeout_secs(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    match std::env::var(TIMEOUT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Input(format!("{TIMEOUT_ENV} must be a whole number of seconds"))),
        Err(_) => Ok(flag),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn formula(text: &str) -> Result<Formula, Failure> {
    parse_formula(text).map_err(|e| Failure::Input(format!("formula: {e}")))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn translate_failure(e: TranslateError) -> Failure {
    match e {
        TranslateError::Automaton(AutomatonError::Timeout) => Failure::Timeout,
        e => Failure::Input(e.to_string()),
    }
}

fn parse_word(text: &str, alphabet: &Alphabet) -> Result<LassoWord, Failure> {
    let (u, v) = text
        .split_once(';')
        .ok_or_else(|| Failure::Input("word must look like `prefix ; cycle`".into()))?;
    let letters = |part: &str| -> Result<Vec<usize>, Failure> {
        part.split_whitespace()
            .map(|t| alphabet.parse_letter(t).map_err(Failure::from))
            .collect()
    };
    Ok(LassoWord::new(letters(u)?, letters(v)?)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let limit = timeout_secs(cli.timeout)?;
    let deadline = limit.map(|s| Instant::now() + Duration::from_secs(s));
    let opts = DealternateOptions::with_deadline(deadline);
    match cli.cmd {
        Cmd::Schedule {
            formula: text,
            kripke,
            eps,
            json,
        } => {
            let phi = formula(&text)?;
            let k = KripkeStructure::parse_any(&read(&kripke)?)?;
            let res = match schedule_with(&k, &phi, &eps, opts) {
                Ok(r) => r,
                Err(e) if is_timeout(&e) => return Err(Failure::Timeout),
                Err(e) => return Err(e.into()),
            };
            if json {
                println!("{}", to_json(&res.report(&k, &eps)));
            } else {
                println!("path: {}", res.path.display(&k));
                println!("value: {}", res.exact_value);
                println!("guaranteed: >= {}", res.guaranteed_lb);
                println!("best possible: in [{}, {}]", res.sup_interval.0, res.sup_interval.1);
                if res.exact_value > res.guaranteed_lb {
                    // the path itself tightens the lower end
                    println!("tighter: best possible in [{}, {}]", res.exact_value, res.sup_interval.1);
                }
            }
        }
        Cmd::Translate {
            formula: text,
            eps,
            stats,
            dot,
            na,
            json,
        } => {
            let phi = formula(&text)?;
            let alt = translate_with(&phi, &eps, opts).map_err(translate_failure)?;
            let nondet = if stats || na {
                Some(dealternate_with(&alt, opts).map_err(|e| translate_failure(e.into()))?)
            } else {
                None
            };
            if stats {
                let s = translation_stats(&phi, &eps, &alt, nondet.as_ref());
                if json {
                    println!("{}", to_json(&s));
                } else {
                    println!("formula: {}", s.formula);
                    println!("epsilon: {}", s.epsilon);
                    println!("formula size: {}", s.formula_size);
                    println!("alternating states: {}", s.alternating_states);
                    if let Some(n) = s.nondeterministic_states {
                        println!("nondeterministic states: {n}");
                    }
                }
            } else if let Some(a) = &nondet {
                if dot {
                    print!("{}", acceptance_to_dot(a));
                } else {
                    println!("{}", to_json(&AutomatonFile::from_acceptance(a)));
                }
            } else if dot {
                print!("{}", alternating_to_dot(&alt));
            } else {
                println!("{}", to_json(&AutomatonFile::from_alternating(&alt)));
            }
        }
        Cmd::Eval {
            formula: text,
            path,
            kripke,
            word,
        } => {
            let phi = formula(&text)?;
            let value = match (path, kripke, word) {
                (Some(p), Some(k), _) => {
                    let k = KripkeStructure::parse_any(&read(&k)?)?;
                    eval_path(&k, &LassoPath::parse(&p, &k)?, &phi)
                }
                (None, _, Some(w)) => {
                    let aps: Vec<String> = phi.atoms().into_iter().collect();
                    let alphabet = Alphabet::powerset(&aps);
                    eval_word(&parse_word(&w, &alphabet)?, &aps, &phi)
                }
                _ => return Err(Failure::Input("give --path with --kripke, or --word".into())),
            };
            println!("{value}");
        }
        Cmd::Optimum { automaton, json } => {
            let file: AutomatonFile = serde_json::from_str(&read(&automaton)?)?;
            let a = match file.to_acceptance() {
                Ok(a) => a,
                Err(_) => dealternate_with(&file.to_alternating()?, opts).map_err(|e| match e {
                    AutomatonError::Timeout => Failure::Timeout,
                    e => Failure::Input(e.to_string()),
                })?,
            };
            let (value, run) = optimal_value(&a);
            let name = |l: &usize| a.alphabet().letter_name(*l);
            let prefix: Vec<String> = run.word.prefix.iter().map(name).collect();
            let cycle: Vec<String> = run.word.cycle.iter().map(name).collect();
            if json {
                let out = serde_json::json!({
                    "value": value,
                    "prefix": prefix,
                    "cycle": cycle,
                    "prefix_states": run.prefix_states,
                    "cycle_states": run.cycle_states,
                });
                println!("{}", to_json(&out));
            } else {
                println!("value: {value}");
                println!("word: {} ; {}", prefix.join(" "), cycle.join(" "));
            }
        }
        Cmd::Bench {
            kind,
            formula: formulas,
            eps,
            sizes,
            degrees,
            instances,
            seed,
            out_dir,
            json,
        } => {
            let timeout = Duration::from_secs(limit.unwrap_or(120));
            let (csv, md, js) = match kind {
                BenchKind::Sizes => {
                    let rows = size_table(&formulas, &eps, timeout)?;
                    (size_report_csv(&eps, &rows), size_report_markdown(&eps, &rows), to_json(&rows))
                }
                BenchKind::Time => {
                    let [text] = formulas.as_slice() else {
                        return Err(Failure::Input("time benchmarks take exactly one formula".into()));
                    };
                    let cfg = BenchConfig {
                        formula: text.clone(),
                        eps,
                        sizes,
                        degrees,
                        instances,
                        seed,
                        timeout,
                    };
                    cfg.validate().map_err(Failure::Input)?;
                    let rows = time_table(&cfg)?;
                    (time_report_csv(&rows), time_report_markdown(&rows), to_json(&rows))
                }
            };
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.csv"), &csv)?;
                fs::write(dir.join("report.md"), &md)?;
            }
            if json {
                println!("{js}");
            } else {
                print!("{md}");
            }
        }
        Cmd::GenKripke {
            states,
            degree,
            aps,
            seed,
            json,
        } => {
            if states == 0 || degree == 0 {
                return Err(Failure::Input("states and degree must be at least 1".into()));
            }
            let k = gen_random_kripke(states, degree, &aps, seed);
            if json {
                println!("{}", to_json(&k.to_file()));
            } else {
                print!("{}", k.to_kts());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap would exit with 2 on bad arguments, which is reserved for timeouts
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Timeout) => {
            eprintln!("timeout");
            ExitCode::from(2)
        }
    }
}
