//! Weighted ω-automata over a locally finite semiring and their reduction
//! to acceptance automata. Only the fuzzy semiring `([0,1], max, min, 0, 1)`
//! ships; the trait lets other finite instances plug in.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{AcceptanceAutomaton, Alphabet, AutomatonError, LassoWord};
use crate::values::Rat01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemiringError {
    #[error("generated submonoid exceeds {0} elements; the instance is not locally finite here")]
    NotLocallyFinite(usize),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error("malformed weighted automaton: {0}")]
    Malformed(String),
}

/// Ordered semiring on a carrier embedded in `[0,1]`. `plus` is expected to
/// be the lattice join so that sums over runs are suprema.
pub trait Semiring {
    fn name(&self) -> &str;
    fn zero(&self) -> Rat01;
    fn one(&self) -> Rat01;
    fn plus(&self, a: &Rat01, b: &Rat01) -> Rat01;
    fn times(&self, a: &Rat01, b: &Rat01) -> Rat01;
    fn le(&self, a: &Rat01, b: &Rat01) -> bool;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Fuzzy;

impl Semiring for Fuzzy {
    fn name(&self) -> &str {
        "fuzzy"
    }
    fn zero(&self) -> Rat01 {
        Rat01::zero()
    }
    fn one(&self) -> Rat01 {
        Rat01::one()
    }
    fn plus(&self, a: &Rat01, b: &Rat01) -> Rat01 {
        a.clone().max(b.clone())
    }
    fn times(&self, a: &Rat01, b: &Rat01) -> Rat01 {
        a.clone().min(b.clone())
    }
    fn le(&self, a: &Rat01, b: &Rat01) -> bool {
        a <= b
    }
}

pub const DEFAULT_SUBMONOID_BOUND: usize = 4096;

/// Closure of `weights ∪ {1}` under `times`.
pub fn generated_submonoid<S: Semiring + ?Sized>(
    s: &S,
    weights: impl IntoIterator<Item = Rat01>,
    bound: usize,
) -> Result<BTreeSet<Rat01>, SemiringError> {
    let gens: BTreeSet<Rat01> = weights.into_iter().collect();
    let mut out = BTreeSet::from([s.one()]);
    let mut frontier: Vec<Rat01> = vec![s.one()];
    while let Some(x) = frontier.pop() {
        for g in &gens {
            let y = s.times(&x, g);
            if out.insert(y.clone()) {
                if out.len() > bound {
                    return Err(SemiringError::NotLocallyFinite(bound));
                }
                frontier.push(y);
            }
        }
    }
    Ok(out)
}

/// Weighted automaton: `delta[q][a]` lists `(q′, w)` with `w ≠ 0`; absent
/// targets carry weight zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAutomaton {
    alphabet: Alphabet,
    labels: Vec<String>,
    initial: Vec<Rat01>,
    delta: Vec<Vec<Vec<(usize, Rat01)>>>,
    acceptance: Vec<Rat01>,
}

impl WeightedAutomaton {
    pub fn new(
        alphabet: Alphabet,
        labels: Vec<String>,
        initial: Vec<Rat01>,
        mut delta: Vec<Vec<Vec<(usize, Rat01)>>>,
        acceptance: Vec<Rat01>,
    ) -> Result<Self, SemiringError> {
        let n = acceptance.len();
        if labels.len() != n || initial.len() != n || delta.len() != n {
            return Err(SemiringError::Malformed("per-state lists differ in length".into()));
        }
        for row in &mut delta {
            if row.len() != alphabet.len() {
                return Err(SemiringError::Malformed("transition row does not cover the alphabet".into()));
            }
            for out in row.iter_mut() {
                if out.iter().any(|&(t, _)| t >= n) {
                    return Err(SemiringError::Malformed("transition target out of range".into()));
                }
                out.retain(|(_, w)| !w.is_zero());
                out.sort();
                let before = out.len();
                out.dedup_by_key(|(t, _)| *t);
                if out.len() != before {
                    return Err(SemiringError::Malformed("duplicate transition target".into()));
                }
            }
        }
        Ok(WeightedAutomaton {
            alphabet,
            labels,
            initial,
            delta,
            acceptance,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.acceptance.len()
    }

    pub fn initial_weight(&self, q: usize) -> &Rat01 {
        &self.initial[q]
    }

    pub fn acceptance(&self, q: usize) -> &Rat01 {
        &self.acceptance[q]
    }

    pub fn transitions(&self, q: usize, letter: usize) -> &[(usize, Rat01)] {
        &self.delta[q][letter]
    }

    fn transition_weights(&self) -> impl Iterator<Item = Rat01> + '_ {
        self.delta.iter().flatten().flatten().map(|(_, w)| w.clone())
    }

    pub fn to_file(&self) -> WeightedFile {
        WeightedFile {
            alphabet: self.alphabet.clone(),
            states: (0..self.num_states())
                .map(|q| WeightedStateEntry {
                    id: q,
                    label: self.labels[q].clone(),
                    initial: self.initial[q].clone(),
                    acceptance: self.acceptance[q].clone(),
                })
                .collect(),
            transitions: (0..self.num_states())
                .flat_map(|q| {
                    (0..self.alphabet.len()).flat_map(move |a| {
                        self.delta[q][a].iter().map(move |(t, w)| WeightedEdge {
                            src: q,
                            letter: self.alphabet.letter_name(a),
                            dst: *t,
                            weight: w.clone(),
                        })
                    })
                })
                .collect(),
        }
    }

    pub fn from_file(f: &WeightedFile) -> Result<Self, SemiringError> {
        let n = f.states.len();
        let mut labels = vec![String::new(); n];
        let mut initial = vec![Rat01::zero(); n];
        let mut acceptance = vec![Rat01::zero(); n];
        for s in &f.states {
            if s.id >= n {
                return Err(SemiringError::Malformed(format!("state id {} out of range", s.id)));
            }
            labels[s.id] = s.label.clone();
            initial[s.id] = s.initial.clone();
            acceptance[s.id] = s.acceptance.clone();
        }
        let mut delta = vec![vec![Vec::new(); f.alphabet.len()]; n];
        for e in &f.transitions {
            let a = f.alphabet.parse_letter(&e.letter)?;
            if e.src >= n {
                return Err(SemiringError::Malformed(format!("state id {} out of range", e.src)));
            }
            delta[e.src][a].push((e.dst, e.weight.clone()));
        }
        WeightedAutomaton::new(f.alphabet.clone(), labels, initial, delta, acceptance)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedStateEntry {
    pub id: usize,
    #[serde(default)]
    pub label: String,
    pub initial: Rat01,
    pub acceptance: Rat01,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub src: usize,
    pub letter: String,
    pub dst: usize,
    pub weight: Rat01,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedFile {
    pub alphabet: Alphabet,
    pub states: Vec<WeightedStateEntry>,
    pub transitions: Vec<WeightedEdge>,
}

/// Equivalent acceptance automaton over pairs `(q, k)` where `k` is the
/// product of the initial weight and the transition weights read so far.
/// `F′(q, k) = k · F(q)`. A run starts in `(q, I(q))` for each `I(q) ≠ 0`,
/// which for 0/1 initial weights is `I × {1}`. Successors whose
/// accumulated weight is zero go to a sink with value 0 instead.
pub fn nondeterminize<S: Semiring + ?Sized>(
    s: &S,
    a: &WeightedAutomaton,
) -> Result<AcceptanceAutomaton, SemiringError> {
    nondeterminize_with(s, a, DEFAULT_SUBMONOID_BOUND)
}

pub fn nondeterminize_with<S: Semiring + ?Sized>(
    s: &S,
    a: &WeightedAutomaton,
    bound: usize,
) -> Result<AcceptanceAutomaton, SemiringError> {
    // only checks local finiteness; pairs are built on demand below
    generated_submonoid(s, a.transition_weights().chain(a.initial.iter().cloned()), bound)?;
    let zero = s.zero();
    let sigma = a.alphabet.len();
    let mut ids: HashMap<(usize, Rat01), usize> = HashMap::new();
    let mut pairs: Vec<Option<(usize, Rat01)>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut sink: Option<usize> = None;
    let mut intern = |pair: Option<(usize, Rat01)>,
                      pairs: &mut Vec<Option<(usize, Rat01)>>,
                      queue: &mut VecDeque<usize>|
     -> usize {
        let fresh = |pairs: &mut Vec<Option<(usize, Rat01)>>, queue: &mut VecDeque<usize>, p| {
            pairs.push(p);
            queue.push_back(pairs.len() - 1);
            pairs.len() - 1
        };
        match pair {
            None => *sink.get_or_insert_with(|| fresh(pairs, queue, None)),
            Some(p) => match ids.get(&p) {
                Some(&id) => id,
                None => {
                    let id = fresh(pairs, queue, Some(p.clone()));
                    ids.insert(p, id);
                    id
                }
            },
        }
    };
    let mut initial = Vec::new();
    for q in 0..a.num_states() {
        if a.initial[q] != zero {
            initial.push(intern(Some((q, a.initial[q].clone())), &mut pairs, &mut queue));
        }
    }
    if initial.is_empty() {
        initial.push(intern(None, &mut pairs, &mut queue));
    }
    let mut delta: Vec<Vec<Vec<usize>>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        let row: Vec<Vec<usize>> = match pairs[id].clone() {
            None => vec![vec![id]; sigma],
            Some((q, k)) => (0..sigma)
                .map(|letter| {
                    let mut out: Vec<usize> = a.delta[q][letter]
                        .iter()
                        .map(|(t, w)| {
                            let k2 = s.times(&k, w);
                            let p = (k2 != zero).then_some((*t, k2));
                            intern(p, &mut pairs, &mut queue)
                        })
                        .collect();
                    if out.is_empty() {
                        out.push(intern(None, &mut pairs, &mut queue));
                    }
                    out.sort_unstable();
                    out.dedup();
                    out
                })
                .collect(),
        };
        if delta.len() <= id {
            delta.resize(id + 1, Vec::new());
        }
        delta[id] = row;
    }
    let labels = pairs
        .iter()
        .map(|p| match p {
            Some((q, k)) => format!("({}, {k})", a.labels[*q]),
            None => "sink".to_string(),
        })
        .collect();
    let acceptance = pairs
        .iter()
        .map(|p| match p {
            Some((q, k)) => s.times(k, &a.acceptance[*q]),
            None => zero.clone(),
        })
        .collect();
    Ok(AcceptanceAutomaton::new(a.alphabet.clone(), labels, initial, delta, acceptance)?)
}

/// Value of a fuzzy automaton on a lasso, computed straight from the
/// weighted-language definition: since prefix minima only decrease, the
/// value is at least `t` iff some run keeps every weight `≥ t` and sees
/// `F ≥ t` infinitely often. Checked for each candidate `t` on the graph of
/// (state, lasso position) pairs.
pub fn fuzzy_lasso_value(a: &WeightedAutomaton, w: &LassoWord) -> Result<Rat01, SemiringError> {
    let size = a.alphabet.len();
    if let Some(&letter) = w.prefix.iter().chain(&w.cycle).find(|&&l| l >= size) {
        return Err(AutomatonError::LetterOutOfRange { letter, size }.into());
    }
    let mut candidates: Vec<Rat01> = a
        .initial
        .iter()
        .chain(&a.acceptance)
        .cloned()
        .chain(a.transition_weights())
        .filter(|v| !v.is_zero())
        .collect();
    candidates.sort();
    candidates.dedup();
    let n = a.num_states();
    let pos = w.positions();
    let node = |q: usize, p: usize| q * pos + p;
    for t in candidates.into_iter().rev() {
        let succ = |v: usize| -> Vec<usize> {
            let (q, p) = (v / pos, v % pos);
            a.delta[q][w.letter_at(p)]
                .iter()
                .filter(|(_, wt)| wt >= &t)
                .map(|&(q2, _)| node(q2, w.next(p)))
                .collect()
        };
        let reach = |from: Vec<usize>| -> Vec<bool> {
            let mut seen = vec![false; n * pos];
            let mut stack = from;
            while let Some(v) = stack.pop() {
                if !seen[v] {
                    seen[v] = true;
                    stack.extend(succ(v));
                }
            }
            seen
        };
        let starts: Vec<usize> = (0..n).filter(|&q| a.initial[q] >= t).map(|q| node(q, 0)).collect();
        let reachable = reach(starts);
        let hit = (0..n * pos).any(|v| {
            reachable[v] && a.acceptance[v / pos] >= t && reach(succ(v))[v]
        });
        if hit {
            return Ok(t);
        }
    }
    Ok(Rat01::zero())
}
