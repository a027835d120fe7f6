//! Kripke structures, the automaton–structure product, near-optimal path
//! search and the exact truth value of a formula on a lasso.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{
    dealternate_with, optimal_value, AcceptanceAutomaton, Alphabet, AutomatonError,
    DealternateOptions, LassoWord,
};
use crate::formula::Formula;
use crate::translate::{translate_over, Margin, TranslateError};
use crate::values::{Discount, Rat01};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KripkeError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("state `{0}` has no outgoing edge")]
    NotLeftTotal(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state `{state}` carries undeclared proposition `{ap}`")]
    UnknownAp { state: String, ap: String },
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("structure has no states")]
    Empty,
    #[error("path is not a path of the structure: {0}")]
    BadPath(String),
    #[error("malformed JSON: {0}")]
    Json(String),
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Kripke(#[from] KripkeError),
    #[error("proposition `{0}` of the formula is not declared by the structure")]
    UndeclaredAp(String),
}

/// Finite Kripke structure with a left-total transition relation. Labels
/// are bitmasks over `aps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KripkeStructure {
    aps: Vec<String>,
    names: Vec<String>,
    labels: Vec<u64>,
    succ: Vec<Vec<usize>>,
    init: Option<Vec<usize>>,
}

impl KripkeStructure {
    pub fn new(
        aps: Vec<String>,
        names: Vec<String>,
        labels: Vec<u64>,
        mut succ: Vec<Vec<usize>>,
        init: Option<Vec<usize>>,
    ) -> Result<Self, KripkeError> {
        let n = names.len();
        if n == 0 {
            return Err(KripkeError::Empty);
        }
        if aps.len() > 63 {
            return Err(KripkeError::Parse {
                line: 0,
                msg: "at most 63 atomic propositions are supported".into(),
            });
        }
        if labels.len() != n || succ.len() != n {
            return Err(KripkeError::Parse {
                line: 0,
                msg: "state, label and edge lists differ in length".into(),
            });
        }
        let mut seen = HashMap::new();
        for name in &names {
            if seen.insert(name.as_str(), ()).is_some() {
                return Err(KripkeError::DuplicateState(name.clone()));
            }
        }
        for (s, out) in succ.iter_mut().enumerate() {
            out.sort_unstable();
            out.dedup();
            if out.is_empty() {
                return Err(KripkeError::NotLeftTotal(names[s].clone()));
            }
            if let Some(&t) = out.iter().find(|&&t| t >= n) {
                return Err(KripkeError::UnknownState(t.to_string()));
            }
        }
        for (s, &l) in labels.iter().enumerate() {
            if l >> aps.len() != 0 {
                return Err(KripkeError::UnknownAp {
                    state: names[s].clone(),
                    ap: format!("#{}", 63 - l.leading_zeros()),
                });
            }
        }
        if let Some(init) = &init {
            if let Some(&t) = init.iter().find(|&&t| t >= n) {
                return Err(KripkeError::UnknownState(t.to_string()));
            }
        }
        Ok(KripkeStructure {
            aps,
            names,
            labels,
            succ,
            init,
        })
    }

    pub fn aps(&self) -> &[String] {
        &self.aps
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn label(&self, s: usize) -> u64 {
        self.labels[s]
    }

    pub fn holds(&self, s: usize, ap: &str) -> bool {
        self.aps
            .iter()
            .position(|a| a == ap)
            .is_some_and(|i| self.labels[s] >> i & 1 == 1)
    }

    pub fn successors(&self, s: usize) -> &[usize] {
        &self.succ[s]
    }

    /// Designated initial states, or every state when none are declared.
    pub fn initial_states(&self) -> Vec<usize> {
        match &self.init {
            Some(i) => i.clone(),
            None => (0..self.num_states()).collect(),
        }
    }

    pub fn has_edge(&self, s: usize, t: usize) -> bool {
        self.succ[s].binary_search(&t).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    /// Parse the line-oriented `.kts` format.
    pub fn parse_kts(text: &str) -> Result<Self, KripkeError> {
        let mut aps: Vec<String> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut label_names: Vec<Vec<String>> = Vec::new();
        let mut edges: Vec<(usize, String, String)> = Vec::new();
        let mut init: Vec<(usize, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| KripkeError::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (cmd, rest) = match line.split_once(char::is_whitespace) {
                Some((c, r)) => (c, r.trim()),
                None => (line, ""),
            };
            match cmd {
                "aps" => aps.extend(rest.split_whitespace().map(str::to_string)),
                "state" => {
                    let (name, labels) = match rest.find('{') {
                        Some(open) => {
                            let close = rest
                                .rfind('}')
                                .filter(|&c| c > open)
                                .ok_or_else(|| err("missing `}`".into()))?;
                            if !rest[close + 1..].trim().is_empty() {
                                return Err(err("trailing text after `}`".into()));
                            }
                            let labels = rest[open + 1..close]
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(str::to_string)
                                .collect();
                            (rest[..open].trim(), labels)
                        }
                        None => (rest, Vec::new()),
                    };
                    if name.is_empty() || name.contains(char::is_whitespace) {
                        return Err(err(format!("bad state name `{name}`")));
                    }
                    names.push(name.to_string());
                    label_names.push(labels);
                }
                "edge" => {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(err("`edge` takes two state names".into()));
                    }
                    edges.push((line_no, parts[0].to_string(), parts[1].to_string()));
                }
                "init" => {
                    if rest.is_empty() {
                        return Err(err("`init` takes state names".into()));
                    }
                    init.extend(rest.split_whitespace().map(|s| (line_no, s.to_string())));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |line: usize, name: &str| {
            index.get(name).copied().ok_or_else(|| KripkeError::Parse {
                line,
                msg: format!("unknown state `{name}`"),
            })
        };
        let mut succ = vec![Vec::new(); names.len()];
        for (line, a, b) in &edges {
            let (s, t) = (lookup(*line, a)?, lookup(*line, b)?);
            succ[s].push(t);
        }
        let mut labels = Vec::with_capacity(names.len());
        for (s, ls) in label_names.iter().enumerate() {
            let mut mask = 0u64;
            for l in ls {
                let i = aps.iter().position(|a| a == l).ok_or_else(|| KripkeError::UnknownAp {
                    state: names[s].clone(),
                    ap: l.clone(),
                })?;
                mask |= 1 << i;
            }
            labels.push(mask);
        }
        let init = if init.is_empty() {
            None
        } else {
            Some(init.iter().map(|(l, n)| lookup(*l, n)).collect::<Result<Vec<_>, _>>()?)
        };
        KripkeStructure::new(aps, names, labels, succ, init)
    }

    pub fn to_kts(&self) -> String {
        let mut out = format!("aps {}\n", self.aps.join(" "));
        for s in 0..self.num_states() {
            let ls: Vec<&str> = (0..self.aps.len())
                .filter(|i| self.labels[s] >> i & 1 == 1)
                .map(|i| self.aps[i].as_str())
                .collect();
            out.push_str(&format!("state {} {{{}}}\n", self.names[s], ls.join(",")));
        }
        for s in 0..self.num_states() {
            for &t in &self.succ[s] {
                out.push_str(&format!("edge {} {}\n", self.names[s], self.names[t]));
            }
        }
        if let Some(init) = &self.init {
            for &s in init {
                out.push_str(&format!("init {}\n", self.names[s]));
            }
        }
        out
    }

    pub fn to_file(&self) -> KripkeFile {
        KripkeFile {
            aps: self.aps.clone(),
            states: (0..self.num_states())
                .map(|s| KripkeStateEntry {
                    name: self.names[s].clone(),
                    labels: (0..self.aps.len())
                        .filter(|i| self.labels[s] >> i & 1 == 1)
                        .map(|i| self.aps[i].clone())
                        .collect(),
                })
                .collect(),
            edges: (0..self.num_states())
                .flat_map(|s| {
                    self.succ[s]
                        .iter()
                        .map(move |&t| (self.names[s].clone(), self.names[t].clone()))
                })
                .collect(),
            init: self
                .init
                .as_ref()
                .map(|i| i.iter().map(|&s| self.names[s].clone()).collect())
                .unwrap_or_default(),
        }
    }

    pub fn from_file(f: &KripkeFile) -> Result<Self, KripkeError> {
        let mut text = format!("aps {}\n", f.aps.join(" "));
        for s in &f.states {
            text.push_str(&format!("state {} {{{}}}\n", s.name, s.labels.join(",")));
        }
        for (a, b) in &f.edges {
            text.push_str(&format!("edge {a} {b}\n"));
        }
        for s in &f.init {
            text.push_str(&format!("init {s}\n"));
        }
        KripkeStructure::parse_kts(&text)
    }

    /// Parse either format, choosing JSON when the text starts with `{`.
    pub fn parse_any(text: &str) -> Result<Self, KripkeError> {
        if text.trim_start().starts_with('{') {
            let f: KripkeFile = serde_json::from_str(text).map_err(|e| KripkeError::Json(e.to_string()))?;
            KripkeStructure::from_file(&f)
        } else {
            KripkeStructure::parse_kts(text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KripkeStateEntry {
    pub name: String,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// JSON form of a Kripke structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KripkeFile {
    pub aps: Vec<String>,
    pub states: Vec<KripkeStateEntry>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub init: Vec<String>,
}

/// Ultimately periodic path `u · v^ω` of state indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LassoPath {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl LassoPath {
    pub fn new(prefix: Vec<usize>, cycle: Vec<usize>) -> Result<Self, KripkeError> {
        if cycle.is_empty() {
            return Err(KripkeError::BadPath("empty cycle".into()));
        }
        Ok(LassoPath { prefix, cycle })
    }

    /// Parse `"s0 s0 ; s1"`: prefix names, `;`, cycle names.
    pub fn parse(text: &str, k: &KripkeStructure) -> Result<Self, KripkeError> {
        let (u, v) = text
            .split_once(';')
            .ok_or_else(|| KripkeError::BadPath("expected `prefix ; cycle`".into()))?;
        let names = |part: &str| -> Result<Vec<usize>, KripkeError> {
            part.split_whitespace()
                .map(|n| k.state_index(n).ok_or_else(|| KripkeError::UnknownState(n.to_string())))
                .collect()
        };
        let p = LassoPath::new(names(u)?, names(v)?)?;
        p.validate(k)?;
        Ok(p)
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.prefix.iter().chain(&self.cycle).copied()
    }

    /// Consecutive states, the seam and the wrap-around must be edges.
    pub fn validate(&self, k: &KripkeStructure) -> Result<(), KripkeError> {
        let all: Vec<usize> = self.states().collect();
        if let Some(&s) = all.iter().find(|&&s| s >= k.num_states()) {
            return Err(KripkeError::UnknownState(s.to_string()));
        }
        for i in 0..all.len() {
            let next = if i + 1 < all.len() { all[i + 1] } else { self.cycle[0] };
            if !k.has_edge(all[i], next) {
                return Err(KripkeError::BadPath(format!(
                    "no edge {} -> {}",
                    k.name(all[i]),
                    k.name(next)
                )));
            }
        }
        Ok(())
    }

    pub fn display(&self, k: &KripkeStructure) -> String {
        let names = |xs: &[usize]| xs.iter().map(|&s| k.name(s)).collect::<Vec<_>>().join(" ");
        format!("{} ; {}", names(&self.prefix), names(&self.cycle)).trim().to_string()
    }

    /// The computation `λ(ξ)` as a word over the powerset of `k.aps()`.
    pub fn word(&self, k: &KripkeStructure) -> LassoWord {
        LassoWord {
            prefix: self.prefix.iter().map(|&s| k.label(s) as usize).collect(),
            cycle: self.cycle.iter().map(|&s| k.label(s) as usize).collect(),
        }
    }
}

/// `A × K` over the singleton alphabet: states `(q, s)`, initial
/// `I × W` (or `I × init`), successors
/// `{(q′, s′) | q′ ∈ δ(q, λ(s)), (s, s′) ∈ R}` and `F′(q, s) = F(q)`.
/// Only pairs reachable from the initial ones are built. The automaton's
/// propositions must all be declared by `K`; the letter read at `s` is
/// `λ(s)` restricted to them.
pub fn product(
    a: &AcceptanceAutomaton,
    k: &KripkeStructure,
) -> Result<(AcceptanceAutomaton, Vec<(usize, usize)>), ScheduleError> {
    product_with(a, k, DealternateOptions::default())
}

pub fn product_with(
    a: &AcceptanceAutomaton,
    k: &KripkeStructure,
    opts: DealternateOptions,
) -> Result<(AcceptanceAutomaton, Vec<(usize, usize)>), ScheduleError> {
    let aps = match a.alphabet() {
        Alphabet::Powerset { aps } => aps,
        _ => return Err(AutomatonError::AlphabetMismatch.into()),
    };
    let mut pos = Vec::with_capacity(aps.len());
    for ap in aps {
        pos.push(
            k.aps()
                .iter()
                .position(|x| x == ap)
                .ok_or_else(|| ScheduleError::UndeclaredAp(ap.clone()))?,
        );
    }
    let letter: Vec<usize> = (0..k.num_states())
        .map(|s| {
            pos.iter()
                .enumerate()
                .filter(|(_, &j)| k.label(s) >> j & 1 == 1)
                .fold(0, |m, (i, _)| m | 1 << i)
        })
        .collect();
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut initial = Vec::new();
    for &q in a.initial() {
        for s in k.initial_states() {
            let id = *ids.entry((q, s)).or_insert_with(|| {
                pairs.push((q, s));
                queue.push_back(pairs.len() - 1);
                pairs.len() - 1
            });
            initial.push(id);
        }
    }
    let mut delta: Vec<Vec<Vec<usize>>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        opts.check(id)?;
        let (q, s) = pairs[id];
        let mut out = Vec::new();
        for &q2 in a.successors(q, letter[s]) {
            for &s2 in k.successors(s) {
                let t = *ids.entry((q2, s2)).or_insert_with(|| {
                    pairs.push((q2, s2));
                    queue.push_back(pairs.len() - 1);
                    pairs.len() - 1
                });
                out.push(t);
            }
        }
        if delta.len() <= id {
            delta.resize(id + 1, Vec::new());
        }
        delta[id] = vec![out];
    }
    let labels = pairs
        .iter()
        .map(|&(q, s)| format!("({}, {})", a.label(q), k.name(s)))
        .collect();
    let acceptance = pairs.iter().map(|&(q, _)| a.acceptance(q).clone()).collect();
    let prod = AcceptanceAutomaton::new(Alphabet::Singleton, labels, initial, delta, acceptance)?;
    Ok((prod, pairs))
}

/// Outcome of [`schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub path: LassoPath,
    /// The automaton optimum `m`: `⟦path, φ⟧ ≥ m ≥ sup ⟦ξ, φ⟧ − ε`.
    pub guaranteed_lb: Rat01,
    /// `[m, min(m + ε, 1)]`, which contains `sup_ξ ⟦ξ, φ⟧`.
    pub sup_interval: (Rat01, Rat01),
    pub exact_value: Rat01,
    pub alternating_states: usize,
    pub nondeterministic_states: usize,
    pub product_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub prefix: Vec<String>,
    pub cycle: Vec<String>,
    pub guaranteed_lb: Rat01,
    pub sup_interval: [Rat01; 2],
    pub exact_value: Rat01,
    pub epsilon: Rat01,
    pub alternating_states: usize,
    pub nondeterministic_states: usize,
    pub product_states: usize,
}

impl ScheduleResult {
    pub fn report(&self, k: &KripkeStructure, eps: &Margin) -> ScheduleReport {
        let names = |xs: &[usize]| xs.iter().map(|&s| k.name(s).to_string()).collect();
        ScheduleReport {
            prefix: names(&self.path.prefix),
            cycle: names(&self.path.cycle),
            guaranteed_lb: self.guaranteed_lb.clone(),
            sup_interval: [self.sup_interval.0.clone(), self.sup_interval.1.clone()],
            exact_value: self.exact_value.clone(),
            epsilon: eps.value().clone(),
            alternating_states: self.alternating_states,
            nondeterministic_states: self.nondeterministic_states,
            product_states: self.product_states,
        }
    }
}

/// Find a path whose truth value is within `ε` of the supremum over all
/// paths of `K`.
pub fn schedule(k: &KripkeStructure, phi: &Formula, eps: &Margin) -> Result<ScheduleResult, ScheduleError> {
    schedule_with(k, phi, eps, DealternateOptions::default())
}

pub fn schedule_with(
    k: &KripkeStructure,
    phi: &Formula,
    eps: &Margin,
    opts: DealternateOptions,
) -> Result<ScheduleResult, ScheduleError> {
    let aps: Vec<String> = phi.atoms().into_iter().collect();
    if let Some(ap) = aps.iter().find(|ap| !k.aps().contains(ap)) {
        return Err(ScheduleError::UndeclaredAp(ap.clone()));
    }
    let alt = translate_over(phi, eps, &aps, opts)?;
    let na = dealternate_with(&alt, opts)?;
    let (prod, pairs) = product_with(&na, k, opts)?;
    let (m, run) = optimal_value(&prod);
    let path = LassoPath {
        prefix: run.prefix_states.iter().map(|&p| pairs[p].1).collect(),
        cycle: run.cycle_states.iter().map(|&p| pairs[p].1).collect(),
    };
    debug_assert!(path.validate(k).is_ok());
    let exact_value = eval_path(k, &path, phi);
    let upper = m.sat_add(eps.value());
    Ok(ScheduleResult {
        path,
        guaranteed_lb: m.clone(),
        sup_interval: (m, upper),
        exact_value,
        alternating_states: alt.num_states(),
        nondeterministic_states: na.num_states(),
        product_states: prod.num_states(),
    })
}

/// Exact `⟦ξ, φ⟧` for a lasso path of `K`.
pub fn eval_path(k: &KripkeStructure, path: &LassoPath, phi: &Formula) -> Rat01 {
    eval_word(&path.word(k), k.aps(), phi)
}

/// Exact `⟦π, φ⟧` for a lasso computation whose letters are bitmasks over
/// `aps`. Atoms missing from `aps` are false everywhere.
pub fn eval_word(w: &LassoWord, aps: &[String], phi: &Formula) -> Rat01 {
    Evaluator { w, aps }.values(phi)[0].clone()
}

struct Evaluator<'a> {
    w: &'a LassoWord,
    aps: &'a [String],
}

impl Evaluator<'_> {
    /// Truth values at positions `0 … |u|+|v|−1`; later positions repeat
    /// the cycle.
    fn values(&self, phi: &Formula) -> Vec<Rat01> {
        let n = self.w.positions();
        match phi {
            Formula::True => vec![Rat01::one(); n],
            Formula::Atom(p) => {
                let bit = self.aps.iter().position(|a| a == p);
                (0..n)
                    .map(|i| match bit {
                        Some(b) if self.w.letter_at(i) >> b & 1 == 1 => Rat01::one(),
                        _ => Rat01::zero(),
                    })
                    .collect()
            }
            Formula::Not(a) => self.values(a).iter().map(Rat01::complement).collect(),
            Formula::And(a, b) => {
                let (x, y) = (self.values(a), self.values(b));
                x.into_iter().zip(y).map(|(p, q)| p.min(q)).collect()
            }
            Formula::Next(a) => {
                let x = self.values(a);
                (0..n).map(|i| x[self.w.next(i)].clone()).collect()
            }
            Formula::Apply(op, args) => {
                let xs: Vec<Vec<Rat01>> = args.iter().map(|a| self.values(a)).collect();
                (0..n)
                    .map(|i| {
                        let point: Vec<Rat01> = xs.iter().map(|x| x[i].clone()).collect();
                        op.eval(&point).expect("arity checked at construction")
                    })
                    .collect()
            }
            Formula::Until(a, b) => {
                let (x, y) = (self.values(a), self.values(b));
                (0..n)
                    .map(|i| {
                        // after n steps every reachable position has been seen
                        // with a running minimum no smaller than later visits
                        let mut best = Rat01::zero();
                        let mut run = Rat01::one();
                        let mut p = i;
                        for _ in 0..n {
                            best = best.max(y[p].clone().min(run.clone()));
                            run = run.min(x[p].clone());
                            if run <= best {
                                break;
                            }
                            p = self.w.next(p);
                        }
                        best
                    })
                    .collect()
            }
            Formula::UntilDisc(eta, a, b) => {
                let (x, y) = (self.values(a), self.values(b));
                let cycle_dead = (self.w.prefix.len()..n).all(|p| y[p].is_zero());
                (0..n)
                    .map(|i| {
                        let mut best = Rat01::zero();
                        let mut run = Rat01::one();
                        let mut disc = eta.value(0);
                        let mut p = i;
                        let mut j = 0usize;
                        loop {
                            best = best.max(disc.mul(&y[p]).min(run.clone()));
                            run = run.min(disc.mul(&x[p]));
                            j += 1;
                            disc = disc.mul(eta.base());
                            p = self.w.next(p);
                            if disc <= best || run <= best || (j >= n && cycle_dead) {
                                break best;
                            }
                        }
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for ScheduleResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "value {} (guaranteed >= {}), sup in [{}, {}]",
            self.exact_value, self.guaranteed_lb, self.sup_interval.0, self.sup_interval.1
        )
    }
}
