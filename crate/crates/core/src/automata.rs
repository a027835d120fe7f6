//! `[0,1]`-acceptance Büchi automata, their alternating variant, and the
//! algorithms that operate on them.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::QualityOp;
use crate::values::Rat01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("alphabets differ")]
    AlphabetMismatch,
    #[error("letter {letter} is outside the alphabet of size {size}")]
    LetterOutOfRange { letter: usize, size: usize },
    #[error("unknown letter `{0}`")]
    UnknownLetter(String),
    #[error("state {0} is out of range")]
    BadState(usize),
    #[error("state {state} has no successor on letter {letter}")]
    DeadEnd { state: usize, letter: usize },
    #[error("state {state} has an empty transition formula on letter {letter}")]
    EmptyDisjunction { state: usize, letter: usize },
    #[error("no initial state")]
    NoInitial,
    #[error("operator `{name}` expects {expected} automata, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("lasso cycle must be nonempty")]
    EmptyCycle,
    #[error("malformed automaton: {0}")]
    Malformed(String),
    #[error("state space exceeds {0} states")]
    TooLarge(usize),
    #[error("construction timed out")]
    Timeout,
}

/// Letters are dense indices `0..len()`. For a powerset alphabet the index
/// is the bitmask of the atomic propositions it contains.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Alphabet {
    Powerset { aps: Vec<String> },
    Symbols { symbols: Vec<String> },
    Singleton,
}

impl Alphabet {
    pub fn powerset<S: AsRef<str>>(aps: &[S]) -> Self {
        Alphabet::Powerset {
            aps: aps.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn symbols(n: usize) -> Self {
        Alphabet::Symbols {
            symbols: (0..n).map(|i| format!("a{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Alphabet::Powerset { aps } => 1usize << aps.len(),
            Alphabet::Symbols { symbols } => symbols.len(),
            Alphabet::Singleton => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ap_index(&self, name: &str) -> Option<usize> {
        match self {
            Alphabet::Powerset { aps } => aps.iter().position(|a| a == name),
            _ => None,
        }
    }

    pub fn letter_name(&self, letter: usize) -> String {
        match self {
            Alphabet::Powerset { aps } => {
                let inside: Vec<&str> = aps
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| letter >> i & 1 == 1)
                    .map(|(_, a)| a.as_str())
                    .collect();
                format!("{{{}}}", inside.join(","))
            }
            Alphabet::Symbols { symbols } => symbols[letter].clone(),
            Alphabet::Singleton => "*".to_string(),
        }
    }

    pub fn parse_letter(&self, text: &str) -> Result<usize, AutomatonError> {
        let unknown = || AutomatonError::UnknownLetter(text.to_string());
        match self {
            Alphabet::Powerset { aps } => {
                let body = text
                    .trim()
                    .strip_prefix('{')
                    .and_then(|t| t.strip_suffix('}'))
                    .ok_or_else(unknown)?;
                let mut mask = 0usize;
                for name in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let i = aps.iter().position(|a| a == name).ok_or_else(unknown)?;
                    mask |= 1 << i;
                }
                Ok(mask)
            }
            Alphabet::Symbols { symbols } => {
                symbols.iter().position(|s| s == text.trim()).ok_or_else(unknown)
            }
            Alphabet::Singleton => match text.trim() {
                "*" => Ok(0),
                _ => Err(unknown()),
            },
        }
    }

    fn check(&self, letter: usize) -> Result<(), AutomatonError> {
        if letter < self.len() {
            Ok(())
        } else {
            Err(AutomatonError::LetterOutOfRange {
                letter,
                size: self.len(),
            })
        }
    }
}

/// One disjunct `(q₁ ∧ … ∧ q_k) ∧ v`. An empty state set makes it a leaf.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conjunct {
    pub states: Vec<usize>,
    pub value: Rat01,
}

impl Conjunct {
    pub fn new(mut states: Vec<usize>, value: Rat01) -> Self {
        states.sort_unstable();
        states.dedup();
        Conjunct { states, value }
    }

    pub fn is_leaf(&self) -> bool {
        self.states.is_empty()
    }

    fn dominates(&self, other: &Conjunct) -> bool {
        self.value >= other.value && is_subset(&self.states, &other.states)
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut j = 0;
    for s in small {
        while j < big.len() && big[j] < *s {
            j += 1;
        }
        if j == big.len() || big[j] != *s {
            return false;
        }
    }
    true
}

/// A positive Boolean formula over states and values, kept in DNF.
///
/// Disjuncts dominated by another one (fewer obligations, no smaller value)
/// are dropped; this never changes the value of any run-tree choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dnf {
    disjuncts: Vec<Conjunct>,
}

impl Dnf {
    pub fn leaf(value: Rat01) -> Self {
        Dnf {
            disjuncts: vec![Conjunct::new(vec![], value)],
        }
    }

    pub fn state(q: usize) -> Self {
        Dnf {
            disjuncts: vec![Conjunct::new(vec![q], Rat01::one())],
        }
    }

    /// Panics on an empty list: the empty disjunction never arises.
    pub fn from_disjuncts(disjuncts: Vec<Conjunct>) -> Self {
        assert!(!disjuncts.is_empty(), "empty disjunction");
        let mut d = Dnf { disjuncts };
        d.normalize();
        d
    }

    pub fn disjuncts(&self) -> &[Conjunct] {
        &self.disjuncts
    }

    pub fn or(&self, other: &Dnf) -> Dnf {
        let mut all = self.disjuncts.clone();
        all.extend(other.disjuncts.iter().cloned());
        Dnf::from_disjuncts(all)
    }

    pub fn and(&self, other: &Dnf) -> Dnf {
        let mut all = Vec::with_capacity(self.disjuncts.len() * other.disjuncts.len());
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                let mut states = a.states.clone();
                states.extend_from_slice(&b.states);
                all.push(Conjunct::new(states, a.value.clone().min(b.value.clone())));
            }
        }
        Dnf::from_disjuncts(all)
    }

    fn normalize(&mut self) {
        for c in &mut self.disjuncts {
            // a zero value atom makes the conjunct worth exactly a 0 leaf
            if c.value.is_zero() {
                c.states.clear();
            }
        }
        self.disjuncts.sort_by(|a, b| {
            a.states
                .len()
                .cmp(&b.states.len())
                .then_with(|| b.value.cmp(&a.value))
                .then_with(|| a.states.cmp(&b.states))
        });
        self.disjuncts.dedup();
        let mut kept: Vec<Conjunct> = Vec::with_capacity(self.disjuncts.len());
        for c in self.disjuncts.drain(..) {
            if !kept.iter().any(|k| k.dominates(&c)) {
                kept.push(c);
            }
        }
        // A 0 leaf is worth nothing next to any other disjunct.
        if kept.len() > 1 {
            kept.retain(|c| !(c.is_leaf() && c.value.is_zero()));
        }
        self.disjuncts = kept;
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.disjuncts.iter().flat_map(|c| c.states.iter().copied())
    }

    fn remap(&self, f: &impl Fn(usize) -> usize) -> Dnf {
        Dnf::from_disjuncts(
            self.disjuncts
                .iter()
                .map(|c| Conjunct::new(c.states.iter().map(|q| f(*q)).collect(), c.value.clone()))
                .collect(),
        )
    }
}

impl fmt::Display for Dnf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            let mut parts: Vec<String> = c.states.iter().map(|q| format!("q{q}")).collect();
            if c.states.is_empty() || !c.value.is_one() {
                parts.push(c.value.to_string());
            }
            write!(f, "{}", parts.join(" & "))?;
        }
        Ok(())
    }
}

/// Nondeterministic `[0,1]`-acceptance Büchi automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceAutomaton {
    alphabet: Alphabet,
    labels: Vec<String>,
    initial: Vec<usize>,
    delta: Vec<Vec<Vec<usize>>>,
    acceptance: Vec<Rat01>,
}

impl AcceptanceAutomaton {
    /// `delta[q][a]` lists the `a`-successors of `q`; every list must be
    /// nonempty.
    pub fn new(
        alphabet: Alphabet,
        labels: Vec<String>,
        initial: Vec<usize>,
        mut delta: Vec<Vec<Vec<usize>>>,
        acceptance: Vec<Rat01>,
    ) -> Result<Self, AutomatonError> {
        let n = acceptance.len();
        if labels.len() != n || delta.len() != n {
            return Err(AutomatonError::Malformed(
                "labels, transitions and acceptance disagree on the state count".into(),
            ));
        }
        if initial.is_empty() {
            return Err(AutomatonError::NoInitial);
        }
        if let Some(&q) = initial.iter().find(|&&q| q >= n) {
            return Err(AutomatonError::BadState(q));
        }
        for (q, row) in delta.iter_mut().enumerate() {
            if row.len() != alphabet.len() {
                return Err(AutomatonError::Malformed(format!(
                    "state {q} has {} transition entries for {} letters",
                    row.len(),
                    alphabet.len()
                )));
            }
            for (a, succ) in row.iter_mut().enumerate() {
                succ.sort_unstable();
                succ.dedup();
                if succ.is_empty() {
                    return Err(AutomatonError::DeadEnd { state: q, letter: a });
                }
                if let Some(&t) = succ.iter().find(|&&t| t >= n) {
                    return Err(AutomatonError::BadState(t));
                }
            }
        }
        let mut initial = initial;
        initial.sort_unstable();
        initial.dedup();
        Ok(AcceptanceAutomaton {
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

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn successors(&self, q: usize, letter: usize) -> &[usize] {
        &self.delta[q][letter]
    }

    pub fn acceptance(&self, q: usize) -> &Rat01 {
        &self.acceptance[q]
    }

    pub fn label(&self, q: usize) -> &str {
        &self.labels[q]
    }

    pub fn transition_count(&self) -> usize {
        self.delta.iter().flatten().map(Vec::len).sum()
    }

    /// View as an alternating automaton whose disjuncts are single states.
    pub fn to_alternating(&self) -> AlternatingAutomaton {
        let delta = self
            .delta
            .iter()
            .map(|row| {
                row.iter()
                    .map(|succ| {
                        Dnf::from_disjuncts(
                            succ.iter()
                                .map(|&t| Conjunct::new(vec![t], Rat01::one()))
                                .collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        AlternatingAutomaton {
            alphabet: self.alphabet.clone(),
            labels: self.labels.clone(),
            initial: self.initial.clone(),
            delta,
            acceptance: self.acceptance.clone(),
        }
    }

    fn letter_graph(&self) -> Vec<Vec<(usize, usize)>> {
        self.delta
            .iter()
            .map(|row| {
                let mut best: BTreeMap<usize, usize> = BTreeMap::new();
                for (a, succ) in row.iter().enumerate() {
                    for &t in succ {
                        best.entry(t).or_insert(a);
                    }
                }
                best.into_iter().collect()
            })
            .collect()
    }
}

/// Alternating `[0,1]`-acceptance Büchi automaton with DNF transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingAutomaton {
    alphabet: Alphabet,
    labels: Vec<String>,
    initial: Vec<usize>,
    delta: Vec<Vec<Dnf>>,
    acceptance: Vec<Rat01>,
}

impl AlternatingAutomaton {
    pub fn new(
        alphabet: Alphabet,
        labels: Vec<String>,
        initial: Vec<usize>,
        delta: Vec<Vec<Dnf>>,
        acceptance: Vec<Rat01>,
    ) -> Result<Self, AutomatonError> {
        let n = acceptance.len();
        if labels.len() != n || delta.len() != n {
            return Err(AutomatonError::Malformed(
                "labels, transitions and acceptance disagree on the state count".into(),
            ));
        }
        if initial.is_empty() {
            return Err(AutomatonError::NoInitial);
        }
        if let Some(&q) = initial.iter().find(|&&q| q >= n) {
            return Err(AutomatonError::BadState(q));
        }
        for (q, row) in delta.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(AutomatonError::Malformed(format!(
                    "state {q} has {} transition entries for {} letters",
                    row.len(),
                    alphabet.len()
                )));
            }
            for (a, dnf) in row.iter().enumerate() {
                if dnf.disjuncts.is_empty() {
                    return Err(AutomatonError::EmptyDisjunction { state: q, letter: a });
                }
                if let Some(t) = dnf.states().find(|&t| t >= n) {
                    return Err(AutomatonError::BadState(t));
                }
            }
        }
        Ok(AlternatingAutomaton {
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

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn transition(&self, q: usize, letter: usize) -> &Dnf {
        &self.delta[q][letter]
    }

    pub fn acceptance(&self, q: usize) -> &Rat01 {
        &self.acceptance[q]
    }

    pub fn label(&self, q: usize) -> &str {
        &self.labels[q]
    }

    /// Number of distinct pure-leaf values appearing in transitions.
    pub fn leaf_count(&self) -> usize {
        let mut seen = HashSet::new();
        for row in &self.delta {
            for dnf in row {
                for c in dnf.disjuncts.iter().filter(|c| c.is_leaf()) {
                    seen.insert(c.value.clone());
                }
            }
        }
        seen.len()
    }

    /// True when every disjunct is a single state with value 1.
    pub fn is_nondeterministic(&self) -> bool {
        self.delta.iter().flatten().all(|dnf| {
            dnf.disjuncts
                .iter()
                .all(|c| c.states.len() == 1 && c.value.is_one())
        })
    }

    /// Restrict to states reachable from the initial ones, renumbering in
    /// discovery order.
    pub fn reachable(&self) -> AlternatingAutomaton {
        let n = self.num_states();
        let mut id = vec![usize::MAX; n];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        for &q in &self.initial {
            if id[q] == usize::MAX {
                id[q] = order.len();
                order.push(q);
                queue.push_back(q);
            }
        }
        while let Some(q) = queue.pop_front() {
            for dnf in &self.delta[q] {
                for t in dnf.states() {
                    if id[t] == usize::MAX {
                        id[t] = order.len();
                        order.push(t);
                        queue.push_back(t);
                    }
                }
            }
        }
        let remap = |q: usize| id[q];
        AlternatingAutomaton {
            alphabet: self.alphabet.clone(),
            labels: order.iter().map(|&q| self.labels[q].clone()).collect(),
            initial: self.initial.iter().map(|&q| id[q]).collect(),
            delta: order
                .iter()
                .map(|&q| self.delta[q].iter().map(|d| d.remap(&remap)).collect())
                .collect(),
            acceptance: order.iter().map(|&q| self.acceptance[q].clone()).collect(),
        }
    }
}

/// Ultimately periodic word `u · v^ω` over letter indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LassoWord {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl LassoWord {
    pub fn new(prefix: Vec<usize>, cycle: Vec<usize>) -> Result<Self, AutomatonError> {
        if cycle.is_empty() {
            return Err(AutomatonError::EmptyCycle);
        }
        Ok(LassoWord { prefix, cycle })
    }

    /// Number of distinct positions `|u| + |v|`.
    pub fn positions(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }

    pub fn letter_at(&self, pos: usize) -> usize {
        if pos < self.prefix.len() {
            self.prefix[pos]
        } else {
            self.cycle[pos - self.prefix.len()]
        }
    }

    /// Position reached after reading the letter at `pos`.
    pub fn next(&self, pos: usize) -> usize {
        if pos + 1 < self.positions() {
            pos + 1
        } else {
            self.prefix.len()
        }
    }

    /// Letter at index `i` of the infinite word.
    pub fn letter(&self, i: usize) -> usize {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    fn check(&self, alphabet: &Alphabet) -> Result<(), AutomatonError> {
        self.prefix
            .iter()
            .chain(&self.cycle)
            .try_for_each(|&a| alphabet.check(a))
    }
}

/// A lasso run: `prefix_states[i]` is the state before reading
/// `word.prefix[i]`, likewise for the cycle, and after the last cycle
/// letter the run is back at `cycle_states[0]` (the knot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoRun {
    pub word: LassoWord,
    pub prefix_states: Vec<usize>,
    pub cycle_states: Vec<usize>,
}

impl LassoRun {
    pub fn knot(&self) -> usize {
        self.cycle_states[0]
    }

    pub fn is_run_of(&self, a: &AcceptanceAutomaton) -> bool {
        if self.prefix_states.len() != self.word.prefix.len()
            || self.cycle_states.len() != self.word.cycle.len()
        {
            return false;
        }
        let states: Vec<usize> = self
            .prefix_states
            .iter()
            .chain(&self.cycle_states)
            .copied()
            .collect();
        if !a.initial.contains(&states[0]) {
            return false;
        }
        (0..states.len()).all(|i| {
            let next = if i + 1 < states.len() {
                states[i + 1]
            } else {
                self.knot()
            };
            a.successors(states[i], self.word.letter_at(i)).contains(&next)
        })
    }
}

/// Tarjan's algorithm without recursion. Returns the component id of each
/// vertex.
fn scc(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut comp = vec![usize::MAX; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut ncomp = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// States lying on a cycle through themselves: nontrivial SCC or self-loop.
fn on_cycle(adj: &[Vec<usize>]) -> Vec<bool> {
    let comp = scc(adj);
    let mut size = vec![0usize; adj.len()];
    for &c in &comp {
        size[c] += 1;
    }
    (0..adj.len())
        .map(|v| size[comp[v]] > 1 || adj[v].contains(&v))
        .collect()
}

fn bfs_distances(adj: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Largest acceptance value among reachable states on a cycle.
fn best_recurrent_value(adj: &[Vec<usize>], initial: &[usize], acc: &[Rat01]) -> Rat01 {
    let dist = bfs_distances(adj, initial);
    let cyc = on_cycle(adj);
    (0..adj.len())
        .filter(|&v| dist[v] != usize::MAX && cyc[v])
        .map(|v| acc[v].clone())
        .max()
        .unwrap_or_else(Rat01::zero)
}

/// Maximum of `ℒ(A)(w)` over all infinite words, with a witnessing lasso.
///
/// Ties between knots of equal value are broken by the shortest
/// reach-path plus cycle, then by the lowest state index.
pub fn optimal_value(a: &AcceptanceAutomaton) -> (Rat01, LassoRun) {
    let graph = a.letter_graph();
    let adj: Vec<Vec<usize>> = graph.iter().map(|r| r.iter().map(|e| e.0).collect()).collect();
    let n = adj.len();
    let dist = bfs_distances(&adj, &a.initial);
    let cyc = on_cycle(&adj);
    let comp = scc(&adj);
    let best = (0..n)
        .filter(|&v| dist[v] != usize::MAX && cyc[v])
        .map(|v| a.acceptance[v].clone())
        .max()
        .expect("an automaton without dead ends has a reachable cycle");
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&v| dist[v] != usize::MAX && cyc[v] && a.acceptance[v] == best)
        .collect();
    candidates.sort_by_key(|&v| (dist[v], v));
    let mut chosen: Option<(usize, usize, Vec<usize>)> = None;
    for &s in &candidates {
        let bound = chosen.as_ref().map(|c| c.0);
        if let Some(b) = bound {
            if dist[s] + 1 > b {
                break;
            }
        }
        let limit = bound.map(|b| b - dist[s]);
        if let Some(cycle) = shortest_cycle(&adj, &comp, s, limit) {
            let total = dist[s] + cycle.len() - 1;
            let better = match &chosen {
                None => true,
                Some((t, k, _)) => total < *t || (total == *t && s < *k),
            };
            if better {
                chosen = Some((total, s, cycle));
            }
        }
    }
    let (_, knot, cycle) = chosen.expect("candidate knots lie on cycles");
    let reach = shortest_path(&adj, &a.initial, knot);
    let edge_letter = |u: usize, v: usize| {
        graph[u]
            .iter()
            .find(|e| e.0 == v)
            .map(|e| e.1)
            .expect("edge exists")
    };
    let prefix: Vec<usize> = reach.windows(2).map(|w| edge_letter(w[0], w[1])).collect();
    let cyc_letters: Vec<usize> = cycle.windows(2).map(|w| edge_letter(w[0], w[1])).collect();
    let run = LassoRun {
        word: LassoWord {
            prefix,
            cycle: cyc_letters,
        },
        prefix_states: reach[..reach.len() - 1].to_vec(),
        cycle_states: cycle[..cycle.len() - 1].to_vec(),
    };
    (best, run)
}

/// Shortest cycle `s … s` inside the SCC of `s`, as a vertex list starting
/// and ending at `s`. `limit` bounds the cycle length.
fn shortest_cycle(
    adj: &[Vec<usize>],
    comp: &[usize],
    s: usize,
    limit: Option<usize>,
) -> Option<Vec<usize>> {
    if adj[s].contains(&s) {
        return Some(vec![s, s]);
    }
    let mut parent: HashMap<usize, usize> = HashMap::new();
    let mut depth: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    depth.insert(s, 0);
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        let d = depth[&v];
        if limit.is_some_and(|l| d + 1 > l) {
            return None;
        }
        for &w in &adj[v] {
            if comp[w] != comp[s] {
                continue;
            }
            if w == s {
                let mut path = vec![s];
                let mut cur = v;
                while cur != s {
                    path.push(cur);
                    cur = parent[&cur];
                }
                path.push(s);
                path.reverse();
                return Some(path);
            }
            if let std::collections::hash_map::Entry::Vacant(e) = depth.entry(w) {
                e.insert(d + 1);
                parent.insert(w, v);
                queue.push_back(w);
            }
        }
    }
    None
}

fn shortest_path(adj: &[Vec<usize>], sources: &[usize], target: usize) -> Vec<usize> {
    let mut parent = vec![usize::MAX; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        if v == target {
            break;
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![target];
    let mut cur = target;
    while parent[cur] != usize::MAX {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    path
}

/// Exact `ℒ(A)(w)` through the product of `A` with the lasso positions.
pub fn lasso_value(a: &AcceptanceAutomaton, w: &LassoWord) -> Result<Rat01, AutomatonError> {
    w.check(&a.alphabet)?;
    let p = w.positions();
    let mut id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for &q in &a.initial {
        id.entry((q, 0)).or_insert_with(|| {
            nodes.push((q, 0));
            queue.push_back(nodes.len() - 1);
            nodes.len() - 1
        });
    }
    let mut adj: Vec<Vec<usize>> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let (q, pos) = nodes[v];
        let np = w.next(pos);
        let mut out = Vec::new();
        for &t in a.successors(q, w.letter_at(pos)) {
            let key = (t, np);
            let tid = match id.get(&key) {
                Some(&x) => x,
                None => {
                    nodes.push(key);
                    id.insert(key, nodes.len() - 1);
                    queue.push_back(nodes.len() - 1);
                    nodes.len() - 1
                }
            };
            out.push(tid);
        }
        if adj.len() <= v {
            adj.resize(v + 1, Vec::new());
        }
        adj[v] = out;
    }
    adj.resize(nodes.len(), Vec::new());
    debug_assert!(p > 0);
    let acc: Vec<Rat01> = nodes.iter().map(|&(q, _)| a.acceptance[q].clone()).collect();
    let init: Vec<usize> = (0..nodes.len()).filter(|&v| nodes[v].1 == 0 && a.initial.contains(&nodes[v].0)).collect();
    Ok(best_recurrent_value(&adj, &init, &acc))
}

struct Game {
    max_owned: Vec<bool>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    accepting: Vec<bool>,
}

impl Game {
    fn new(max_owned: Vec<bool>, succ: Vec<Vec<usize>>, accepting: Vec<bool>) -> Self {
        let mut pred = vec![Vec::new(); succ.len()];
        for (v, out) in succ.iter().enumerate() {
            for &w in out {
                pred[w].push(v);
            }
        }
        Game {
            max_owned,
            succ,
            pred,
            accepting,
        }
    }

    /// Attractor of `target` for the given player within the `alive`
    /// subgame.
    fn attractor(&self, alive: &[bool], target: &[bool], for_max: bool) -> Vec<bool> {
        let n = self.succ.len();
        let mut attr = vec![false; n];
        let mut count: Vec<usize> = (0..n)
            .map(|v| self.succ[v].iter().filter(|&&w| alive[w]).count())
            .collect();
        let mut queue = VecDeque::new();
        for v in 0..n {
            if alive[v] && target[v] {
                attr[v] = true;
                queue.push_back(v);
            }
        }
        while let Some(w) = queue.pop_front() {
            for &v in &self.pred[w] {
                if !alive[v] || attr[v] {
                    continue;
                }
                if self.max_owned[v] == for_max {
                    attr[v] = true;
                    queue.push_back(v);
                } else {
                    count[v] -= 1;
                    if count[v] == 0 {
                        attr[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        attr
    }

    /// Winning region of the maximizer for the Büchi condition.
    fn buchi_max(&self) -> Vec<bool> {
        let n = self.succ.len();
        let mut alive = vec![true; n];
        loop {
            let target: Vec<bool> = (0..n).map(|v| alive[v] && self.accepting[v]).collect();
            let reach = self.attractor(&alive, &target, true);
            let trap: Vec<bool> = (0..n).map(|v| alive[v] && !reach[v]).collect();
            if !trap.iter().any(|&b| b) {
                return alive;
            }
            let lost = self.attractor(&alive, &trap, false);
            for v in 0..n {
                if lost[v] {
                    alive[v] = false;
                }
            }
        }
    }
}

/// Exact `ℒ(A)(w)` for an alternating automaton, by solving the threshold
/// acceptance games on (state, lasso position) for each candidate value.
pub fn alt_lasso_value(a: &AlternatingAutomaton, w: &LassoWord) -> Result<Rat01, AutomatonError> {
    w.check(&a.alphabet)?;
    let mut id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |key: (usize, usize), nodes: &mut Vec<(usize, usize)>, queue: &mut VecDeque<usize>| {
        *id.entry(key).or_insert_with(|| {
            nodes.push(key);
            queue.push_back(nodes.len() - 1);
            nodes.len() - 1
        })
    };
    let roots: Vec<usize> = a
        .initial
        .iter()
        .map(|&q| intern((q, 0), &mut nodes, &mut queue))
        .collect();
    // per position node: (value, successor position nodes) for each disjunct
    let mut options: Vec<Vec<(Rat01, Vec<usize>)>> = Vec::new();
    while let Some(v) = queue.pop_front() {
        let (q, pos) = nodes[v];
        let np = w.next(pos);
        let opts: Vec<(Rat01, Vec<usize>)> = a.delta[q][w.letter_at(pos)]
            .disjuncts
            .iter()
            .map(|c| {
                let targets = c
                    .states
                    .iter()
                    .map(|&t| intern((t, np), &mut nodes, &mut queue))
                    .collect();
                (c.value.clone(), targets)
            })
            .collect();
        if options.len() <= v {
            options.resize(v + 1, Vec::new());
        }
        options[v] = opts;
    }
    options.resize(nodes.len(), Vec::new());

    let mut candidates: Vec<Rat01> = vec![Rat01::zero()];
    candidates.extend(nodes.iter().map(|&(q, _)| a.acceptance[q].clone()));
    candidates.extend(options.iter().flatten().map(|o| o.0.clone()));
    candidates.sort();
    candidates.dedup();

    let wins = |c: &Rat01| -> bool {
        let np = nodes.len();
        let win = np;
        let lose = np + 1;
        let mut max_owned = vec![true; np + 2];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); np + 2];
        let mut accepting: Vec<bool> = nodes.iter().map(|&(q, _)| a.acceptance[q] >= *c).collect();
        accepting.push(true);
        accepting.push(false);
        succ[win].push(win);
        succ[lose].push(lose);
        for v in 0..np {
            for (val, targets) in &options[v] {
                if *val < *c {
                    continue;
                }
                if targets.is_empty() {
                    succ[v].push(win);
                } else {
                    let m = succ.len();
                    succ.push(targets.clone());
                    max_owned.push(false);
                    accepting.push(false);
                    succ[v].push(m);
                }
            }
            if succ[v].is_empty() {
                succ[v].push(lose);
            }
        }
        let game = Game::new(max_owned, succ, accepting);
        let region = game.buchi_max();
        roots.iter().any(|&r| region[r])
    };

    // winnability is antitone in the threshold
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if wins(&candidates[mid]) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(candidates[lo].clone())
}

/// Sorted table of the finitely many values in play, so that dense ranks can
/// stand in for rationals inside state keys.
struct ValueTable {
    values: Vec<Rat01>,
}

impl ValueTable {
    fn new(mut values: Vec<Rat01>) -> Self {
        values.push(Rat01::zero());
        values.push(Rat01::one());
        values.sort();
        values.dedup();
        ValueTable { values }
    }

    fn rank(&self, v: &Rat01) -> u32 {
        self.values.binary_search(v).expect("value interned") as u32
    }

    fn value(&self, r: u32) -> &Rat01 {
        &self.values[r as usize]
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Flag {
    Off,
    On,
    /// All acceptance values of the source are 0, so exposing never helps.
    Unused,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct MhKey {
    y: Vec<(u32, u32)>,
    v: u32,
    flag: Flag,
}

/// Options for [`dealternate_with`] and the other state-space
/// constructions. The default budget is large enough for every construction
/// in this crate's benchmarks and has no deadline.
#[derive(Debug, Clone, Copy)]
pub struct DealternateOptions {
    pub max_states: usize,
    pub deadline: Option<Instant>,
}

impl Default for DealternateOptions {
    fn default() -> Self {
        DealternateOptions {
            max_states: 5_000_000,
            deadline: None,
        }
    }
}

impl DealternateOptions {
    pub fn with_deadline(deadline: Option<Instant>) -> Self {
        DealternateOptions {
            deadline,
            ..Default::default()
        }
    }

    /// Called before adding the state numbered `count`.
    pub fn check(&self, count: usize) -> Result<(), AutomatonError> {
        if count >= self.max_states {
            return Err(AutomatonError::TooLarge(self.max_states));
        }
        match self.deadline {
            Some(d) if count.is_multiple_of(256) && Instant::now() >= d => Err(AutomatonError::Timeout),
            _ => Ok(()),
        }
    }
}

/// Language-preserving removal of alternation with exposition flags.
///
/// States are `(Y, v, b)` with `Y` a partial map from states to the
/// greatest acceptance value seen since the last exposition, `v` the
/// smallest leaf value collected so far and `b` the flag. Three
/// simplifications keep the result small without changing the language:
/// all states with `Y = ∅` and the same `v` collapse into one absorbing
/// state worth `v`; once `v = 0` the state collapses into the 0 sink; and
/// when every acceptance value of the source is 0 the flag is dropped.
pub fn dealternate(a: &AlternatingAutomaton) -> AcceptanceAutomaton {
    dealternate_with(a, DealternateOptions::default()).expect("default budget")
}

pub fn dealternate_with(
    a: &AlternatingAutomaton,
    opts: DealternateOptions,
) -> Result<AcceptanceAutomaton, AutomatonError> {
    let mut vals: Vec<Rat01> = a.acceptance.clone();
    for row in &a.delta {
        for dnf in row {
            vals.extend(dnf.disjuncts.iter().map(|c| c.value.clone()));
        }
    }
    let table = ValueTable::new(vals);
    let zero = table.rank(&Rat01::zero());
    let one = table.rank(&Rat01::one());
    let fr: Vec<u32> = a.acceptance.iter().map(|v| table.rank(v)).collect();
    let flagged = fr.iter().any(|&r| r != zero);
    let ranked: Vec<Vec<Vec<(Vec<u32>, u32)>>> = a
        .delta
        .iter()
        .map(|row| {
            row.iter()
                .map(|dnf| {
                    dnf.disjuncts
                        .iter()
                        .map(|c| {
                            (
                                c.states.iter().map(|&q| q as u32).collect(),
                                table.rank(&c.value),
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let nletters = a.alphabet.len();
    let mut ids: HashMap<MhKey, usize> = HashMap::new();
    let mut keys: Vec<MhKey> = Vec::new();
    let mut delta: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut queue = VecDeque::new();

    let normalize = |y: Vec<(u32, u32)>, v: u32, flag: Flag| -> MhKey {
        if v == zero {
            MhKey {
                y: vec![],
                v: zero,
                flag: Flag::Unused,
            }
        } else if y.is_empty() {
            MhKey {
                y,
                v,
                flag: Flag::Unused,
            }
        } else {
            MhKey { y, v, flag }
        }
    };
    let start_flag = if flagged { Flag::Off } else { Flag::Unused };
    let mut initial = Vec::new();
    for &q0 in &a.initial {
        let key = normalize(vec![(q0 as u32, fr[q0])], one, start_flag);
        let id = *ids.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            queue.push_back(keys.len() - 1);
            keys.len() - 1
        });
        initial.push(id);
    }

    while let Some(id) = queue.pop_front() {
        let key = keys[id].clone();
        let mut row: Vec<Vec<usize>> = Vec::with_capacity(nletters);
        for letter in 0..nletters {
            let mut succ_keys: HashSet<MhKey> = HashSet::new();
            if key.y.is_empty() {
                succ_keys.insert(key.clone());
            } else {
                let choices: Vec<&Vec<(Vec<u32>, u32)>> = key
                    .y
                    .iter()
                    .map(|&(q, _)| &ranked[q as usize][letter])
                    .collect();
                let mut pick = vec![0usize; choices.len()];
                loop {
                    let mut y: BTreeMap<u32, u32> = BTreeMap::new();
                    let mut v = key.v;
                    for (i, &(_, acc)) in key.y.iter().enumerate() {
                        let (states, u) = &choices[i][pick[i]];
                        v = v.min(*u);
                        for &t in states {
                            let fresh = fr[t as usize];
                            let val = if key.flag == Flag::On {
                                fresh
                            } else {
                                acc.max(fresh)
                            };
                            y.entry(t)
                                .and_modify(|old| *old = (*old).min(val))
                                .or_insert(val);
                        }
                    }
                    let y: Vec<(u32, u32)> = y.into_iter().collect();
                    if flagged {
                        succ_keys.insert(normalize(y.clone(), v, Flag::Off));
                        succ_keys.insert(normalize(y, v, Flag::On));
                    } else {
                        succ_keys.insert(normalize(y, v, Flag::Unused));
                    }
                    // odometer over disjunct choices
                    let mut i = 0;
                    loop {
                        if i == pick.len() {
                            break;
                        }
                        pick[i] += 1;
                        if pick[i] < choices[i].len() {
                            break;
                        }
                        pick[i] = 0;
                        i += 1;
                    }
                    if i == pick.len() {
                        break;
                    }
                }
            }
            let mut succ = Vec::with_capacity(succ_keys.len());
            for k in succ_keys {
                let next = match ids.get(&k) {
                    Some(&x) => x,
                    None => {
                        opts.check(keys.len())?;
                        keys.push(k.clone());
                        ids.insert(k, keys.len() - 1);
                        queue.push_back(keys.len() - 1);
                        keys.len() - 1
                    }
                };
                succ.push(next);
            }
            row.push(succ);
        }
        if delta.len() <= id {
            delta.resize(id + 1, Vec::new());
        }
        delta[id] = row;
    }

    let acceptance: Vec<Rat01> = keys
        .iter()
        .map(|k| {
            if k.y.is_empty() {
                table.value(k.v).clone()
            } else if k.flag == Flag::On {
                let m = k.y.iter().map(|e| e.1).min().unwrap_or(one).min(k.v);
                table.value(m).clone()
            } else {
                Rat01::zero()
            }
        })
        .collect();
    let labels: Vec<String> = keys
        .iter()
        .map(|k| {
            let y: Vec<String> = k
                .y
                .iter()
                .map(|&(q, r)| format!("{}:{}", a.labels[q as usize], table.value(r)))
                .collect();
            let flag = match k.flag {
                Flag::Off => ",ff",
                Flag::On => ",tt",
                Flag::Unused => "",
            };
            format!("({{{}}},{}{})", y.join(";"), table.value(k.v), flag)
        })
        .collect();
    AcceptanceAutomaton::new(a.alphabet.clone(), labels, initial, delta, acceptance)
}

/// Quotient by the coarsest bisimulation that respects acceptance values.
/// Related states have the same acceptance value and, letter by letter,
/// successors in the same classes, so every run maps to a run with the
/// same value sequence and the language is unchanged.
pub fn bisimulation_quotient(a: &AcceptanceAutomaton) -> AcceptanceAutomaton {
    let n = a.num_states();
    let mut class: Vec<usize> = {
        let mut ids: HashMap<&Rat01, usize> = HashMap::new();
        a.acceptance
            .iter()
            .map(|v| {
                let k = ids.len();
                *ids.entry(v).or_insert(k)
            })
            .collect()
    };
    let mut count = class.iter().copied().max().map_or(0, |m| m + 1);
    loop {
        let mut ids: HashMap<(usize, Vec<Vec<usize>>), usize> = HashMap::new();
        let next: Vec<usize> = (0..n)
            .map(|q| {
                let sig: Vec<Vec<usize>> = a.delta[q]
                    .iter()
                    .map(|succ| {
                        let mut cs: Vec<usize> = succ.iter().map(|&t| class[t]).collect();
                        cs.sort_unstable();
                        cs.dedup();
                        cs
                    })
                    .collect();
                let k = ids.len();
                *ids.entry((class[q], sig)).or_insert(k)
            })
            .collect();
        let new_count = ids.len();
        class = next;
        if new_count == count {
            break;
        }
        count = new_count;
    }
    // renumber classes in order of first appearance from the initial states
    let mut rep = vec![usize::MAX; count];
    let mut order = Vec::new();
    let mut queue: VecDeque<usize> = a.initial.iter().copied().collect();
    let mut seen = vec![false; n];
    for &q in &a.initial {
        seen[q] = true;
    }
    while let Some(q) = queue.pop_front() {
        if rep[class[q]] == usize::MAX {
            rep[class[q]] = order.len();
            order.push(q);
        }
        for row in &a.delta[q] {
            for &t in row {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    let delta = order
        .iter()
        .map(|&q| {
            a.delta[q]
                .iter()
                .map(|succ| succ.iter().map(|&t| rep[class[t]]).collect())
                .collect()
        })
        .collect();
    AcceptanceAutomaton::new(
        a.alphabet.clone(),
        order.iter().map(|&q| a.labels[q].clone()).collect(),
        a.initial.iter().map(|&q| rep[class[q]]).collect(),
        delta,
        order.iter().map(|&q| a.acceptance[q].clone()).collect(),
    )
    .expect("quotient of a well-formed automaton")
}

/// Register product realizing a monotone operator on languages:
/// `ℒ(f(A₁,…,A_k))(w) = f(ℒ(A₁)(w), …, ℒ(A_k)(w))`.
pub fn apply_quality_op(
    op: &QualityOp,
    automata: &[AcceptanceAutomaton],
) -> Result<AcceptanceAutomaton, AutomatonError> {
    apply_quality_op_with(op, automata, DealternateOptions::default())
}

pub fn apply_quality_op_with(
    op: &QualityOp,
    automata: &[AcceptanceAutomaton],
    opts: DealternateOptions,
) -> Result<AcceptanceAutomaton, AutomatonError> {
    if automata.len() != op.arity() {
        return Err(AutomatonError::Arity {
            name: op.name().to_string(),
            expected: op.arity(),
            got: automata.len(),
        });
    }
    let alphabet = automata[0].alphabet.clone();
    if automata.iter().any(|b| b.alphabet != alphabet) {
        return Err(AutomatonError::AlphabetMismatch);
    }
    let tables: Vec<ValueTable> = automata
        .iter()
        .map(|b| ValueTable::new(b.acceptance.clone()))
        .collect();
    let fr: Vec<Vec<u32>> = automata
        .iter()
        .zip(&tables)
        .map(|(b, t)| b.acceptance.iter().map(|v| t.rank(v)).collect())
        .collect();
    let zeros: Vec<u32> = tables.iter().map(|t| t.rank(&Rat01::zero())).collect();

    type Key = (Vec<(u32, u32)>, bool);
    let mut ids: HashMap<Key, usize> = HashMap::new();
    let mut keys: Vec<Key> = Vec::new();
    let mut delta: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut initial = Vec::new();

    let mut starts: Vec<Vec<(u32, u32)>> = vec![vec![]];
    for (i, b) in automata.iter().enumerate() {
        let z = zeros[i];
        starts = starts
            .into_iter()
            .flat_map(|p| {
                b.initial.iter().map(move |&q| {
                    let mut p = p.clone();
                    p.push((q as u32, z));
                    p
                })
            })
            .collect();
    }
    for s in starts {
        let key = (s, false);
        let id = *ids.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            queue.push_back(keys.len() - 1);
            keys.len() - 1
        });
        initial.push(id);
    }

    while let Some(id) = queue.pop_front() {
        let (comps, exposed) = keys[id].clone();
        let mut row = Vec::with_capacity(alphabet.len());
        for letter in 0..alphabet.len() {
            let mut partial: Vec<Vec<(u32, u32)>> = vec![vec![]];
            for (i, &(q, reg)) in comps.iter().enumerate() {
                let succ = automata[i].successors(q as usize, letter);
                partial = partial
                    .into_iter()
                    .flat_map(|p| {
                        let fr = &fr[i];
                        succ.iter().map(move |&t| {
                            let fresh = fr[t];
                            let r = if exposed { fresh } else { reg.max(fresh) };
                            let mut p = p.clone();
                            p.push((t as u32, r));
                            p
                        })
                    })
                    .collect();
            }
            let mut out = Vec::with_capacity(partial.len() * 2);
            for p in partial {
                for flag in [false, true] {
                    let key = (p.clone(), flag);
                    let next = match ids.get(&key) {
                        Some(&x) => x,
                        None => {
                            opts.check(keys.len())?;
                            keys.push(key.clone());
                            ids.insert(key, keys.len() - 1);
                            queue.push_back(keys.len() - 1);
                            keys.len() - 1
                        }
                    };
                    out.push(next);
                }
            }
            row.push(out);
        }
        if delta.len() <= id {
            delta.resize(id + 1, Vec::new());
        }
        delta[id] = row;
    }
    let acceptance: Vec<Rat01> = keys
        .iter()
        .map(|(comps, exposed)| {
            if *exposed {
                let args: Vec<Rat01> = comps
                    .iter()
                    .enumerate()
                    .map(|(i, &(_, r))| tables[i].value(r).clone())
                    .collect();
                op.eval(&args).expect("arity checked")
            } else {
                Rat01::zero()
            }
        })
        .collect();
    let labels: Vec<String> = keys
        .iter()
        .map(|(comps, exposed)| {
            let parts: Vec<String> = comps
                .iter()
                .enumerate()
                .map(|(i, &(q, r))| {
                    format!("{}:{}", automata[i].labels[q as usize], tables[i].value(r))
                })
                .collect();
            format!("<{}>{}", parts.join(" | "), if *exposed { "tt" } else { "ff" })
        })
        .collect();
    AcceptanceAutomaton::new(alphabet, labels, initial, delta, acceptance)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEntry {
    pub id: usize,
    pub label: String,
    pub acceptance: Rat01,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisjunctEntry {
    pub states: Vec<usize>,
    pub value: Rat01,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub src: usize,
    pub letter: String,
    pub dnf: Vec<DisjunctEntry>,
}

/// File form shared by both automaton kinds. A nondeterministic automaton
/// uses single-state disjuncts with value `"1"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutomatonFile {
    pub alphabet: Alphabet,
    pub states: Vec<StateEntry>,
    pub initial: Vec<usize>,
    pub transitions: Vec<TransitionEntry>,
}

impl AutomatonFile {
    pub fn from_alternating(a: &AlternatingAutomaton) -> Self {
        let mut transitions = Vec::new();
        for q in 0..a.num_states() {
            for letter in 0..a.alphabet.len() {
                transitions.push(TransitionEntry {
                    src: q,
                    letter: a.alphabet.letter_name(letter),
                    dnf: a.delta[q][letter]
                        .disjuncts
                        .iter()
                        .map(|c| DisjunctEntry {
                            states: c.states.clone(),
                            value: c.value.clone(),
                        })
                        .collect(),
                });
            }
        }
        AutomatonFile {
            alphabet: a.alphabet.clone(),
            states: (0..a.num_states())
                .map(|q| StateEntry {
                    id: q,
                    label: a.labels[q].clone(),
                    acceptance: a.acceptance[q].clone(),
                })
                .collect(),
            initial: a.initial.clone(),
            transitions,
        }
    }

    pub fn from_acceptance(a: &AcceptanceAutomaton) -> Self {
        Self::from_alternating(&a.to_alternating())
    }

    pub fn to_alternating(&self) -> Result<AlternatingAutomaton, AutomatonError> {
        let n = self.states.len();
        let mut index: HashMap<usize, usize> = HashMap::new();
        for (i, s) in self.states.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(AutomatonError::Malformed(format!("duplicate state id {}", s.id)));
            }
        }
        let lookup = |id: usize| index.get(&id).copied().ok_or(AutomatonError::BadState(id));
        let mut delta: Vec<Vec<Vec<Conjunct>>> = vec![vec![Vec::new(); self.alphabet.len()]; n];
        for t in &self.transitions {
            let src = lookup(t.src)?;
            let letter = self.alphabet.parse_letter(&t.letter)?;
            for d in &t.dnf {
                let states = d.states.iter().map(|&s| lookup(s)).collect::<Result<Vec<_>, _>>()?;
                delta[src][letter].push(Conjunct::new(states, d.value.clone()));
            }
        }
        let mut rows = Vec::with_capacity(n);
        for (q, row) in delta.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (letter, ds) in row.into_iter().enumerate() {
                if ds.is_empty() {
                    return Err(AutomatonError::EmptyDisjunction { state: q, letter });
                }
                out.push(Dnf::from_disjuncts(ds));
            }
            rows.push(out);
        }
        AlternatingAutomaton::new(
            self.alphabet.clone(),
            self.states.iter().map(|s| s.label.clone()).collect(),
            self.initial.iter().map(|&i| lookup(i)).collect::<Result<_, _>>()?,
            rows,
            self.states.iter().map(|s| s.acceptance.clone()).collect(),
        )
    }

    pub fn to_acceptance(&self) -> Result<AcceptanceAutomaton, AutomatonError> {
        let alt = self.to_alternating()?;
        if !alt.is_nondeterministic() {
            return Err(AutomatonError::Malformed(
                "transitions are not single-state disjuncts with value 1".into(),
            ));
        }
        let delta = alt
            .delta
            .iter()
            .map(|row| row.iter().map(|d| d.states().collect()).collect())
            .collect();
        AcceptanceAutomaton::new(alt.alphabet, alt.labels, alt.initial, delta, alt.acceptance)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT rendering: states annotated with their acceptance value, leaf
/// values as boxes, conjunctions through small junction points.
pub fn alternating_to_dot(a: &AlternatingAutomaton) -> String {
    let mut out = String::from("digraph A {\n  rankdir=LR;\n  node [shape=ellipse];\n");
    for q in 0..a.num_states() {
        let shape = if a.acceptance[q].is_zero() { "ellipse" } else { "doublecircle" };
        let _ = writeln!(
            out,
            "  q{q} [shape={shape}, label=\"{}\\nF={}\"];",
            dot_escape(&a.labels[q]),
            a.acceptance[q]
        );
    }
    for (i, &q) in a.initial.iter().enumerate() {
        let _ = writeln!(out, "  init{i} [shape=point];\n  init{i} -> q{q};");
    }
    let mut leaves: BTreeMap<Rat01, usize> = BTreeMap::new();
    let mut junction = 0usize;
    for q in 0..a.num_states() {
        // group letters with identical formulas into one edge
        let mut groups: Vec<(&Dnf, Vec<String>)> = Vec::new();
        for letter in 0..a.alphabet.len() {
            let dnf = &a.delta[q][letter];
            match groups.iter_mut().find(|g| g.0 == dnf) {
                Some(g) => g.1.push(a.alphabet.letter_name(letter)),
                None => groups.push((dnf, vec![a.alphabet.letter_name(letter)])),
            }
        }
        for (dnf, letters) in groups {
            let label = dot_escape(&letters.join(" "));
            for c in &dnf.disjuncts {
                let needs_junction = c.states.len() > 1 || (!c.states.is_empty() && !c.value.is_one());
                let leaf_id = |leaves: &mut BTreeMap<Rat01, usize>, v: &Rat01| {
                    let n = leaves.len();
                    *leaves.entry(v.clone()).or_insert(n)
                };
                if c.states.is_empty() {
                    let l = leaf_id(&mut leaves, &c.value);
                    let _ = writeln!(out, "  q{q} -> leaf{l} [label=\"{label}\"];");
                } else if !needs_junction {
                    let _ = writeln!(out, "  q{q} -> q{} [label=\"{label}\"];", c.states[0]);
                } else {
                    let j = junction;
                    junction += 1;
                    let _ = writeln!(out, "  and{j} [shape=point];\n  q{q} -> and{j} [label=\"{label}\", arrowhead=none];");
                    for t in &c.states {
                        let _ = writeln!(out, "  and{j} -> q{t};");
                    }
                    if !c.value.is_one() {
                        let l = leaf_id(&mut leaves, &c.value);
                        let _ = writeln!(out, "  and{j} -> leaf{l};");
                    }
                }
            }
        }
    }
    for (v, l) in leaves {
        let _ = writeln!(out, "  leaf{l} [shape=box, label=\"{v}\"];");
    }
    out.push_str("}\n");
    out
}

pub fn acceptance_to_dot(a: &AcceptanceAutomaton) -> String {
    alternating_to_dot(&a.to_alternating())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(p: u64, q: u64) -> Rat01 {
        Rat01::frac(p, q)
    }

    fn nfa(
        letters: usize,
        initial: Vec<usize>,
        delta: Vec<Vec<Vec<usize>>>,
        acc: Vec<Rat01>,
    ) -> AcceptanceAutomaton {
        let n = acc.len();
        AcceptanceAutomaton::new(
            Alphabet::symbols(letters),
            (0..n).map(|i| format!("q{i}")).collect(),
            initial,
            delta,
            acc,
        )
        .unwrap()
    }

    fn alt(letters: usize, initial: Vec<usize>, delta: Vec<Vec<Dnf>>, acc: Vec<Rat01>) -> AlternatingAutomaton {
        let n = acc.len();
        AlternatingAutomaton::new(
            Alphabet::symbols(letters),
            (0..n).map(|i| format!("q{i}")).collect(),
            initial,
            delta,
            acc,
        )
        .unwrap()
    }

    pub(crate) fn all_lassos(letters: usize, max_u: usize, max_v: usize) -> Vec<LassoWord> {
        fn words(letters: usize, len: usize) -> Vec<Vec<usize>> {
            let mut out = vec![vec![]];
            for _ in 0..len {
                out = out
                    .into_iter()
                    .flat_map(|w| {
                        (0..letters).map(move |a| {
                            let mut w = w.clone();
                            w.push(a);
                            w
                        })
                    })
                    .collect();
            }
            out
        }
        let mut out = Vec::new();
        for lu in 0..=max_u {
            for lv in 1..=max_v {
                for u in words(letters, lu) {
                    for v in words(letters, lv) {
                        out.push(LassoWord::new(u.clone(), v).unwrap());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn self_loop_optimum() {
        let a = nfa(1, vec![0], vec![vec![vec![0]]], vec![r(1, 1)]);
        let (v, run) = optimal_value(&a);
        assert_eq!(v, r(1, 1));
        assert_eq!(run.knot(), 0);
        assert!(run.is_run_of(&a));
    }

    #[test]
    fn transient_state_does_not_count() {
        let a = nfa(1, vec![0], vec![vec![vec![1]], vec![vec![1]]], vec![r(1, 1), r(1, 2)]);
        let (v, run) = optimal_value(&a);
        assert_eq!(v, r(1, 2));
        assert_eq!(run.knot(), 1);
        assert_eq!(run.prefix_states, vec![0]);
        assert!(run.is_run_of(&a));
    }

    #[test]
    fn tie_break_prefers_short_lasso_then_low_index() {
        // 0 -> 1 (self loop) and 0 -> 2 -> 3 -> 2; states 1, 2 and 3 share a value
        let a = nfa(
            1,
            vec![0],
            vec![vec![vec![1, 2]], vec![vec![1]], vec![vec![3]], vec![vec![2]]],
            vec![r(0, 1), r(1, 2), r(1, 2), r(1, 2)],
        );
        let (_, run) = optimal_value(&a);
        assert_eq!(run.knot(), 1);
        let b = nfa(
            1,
            vec![0],
            vec![vec![vec![1, 2]], vec![vec![1]], vec![vec![2]]],
            vec![r(0, 1), r(1, 2), r(1, 2)],
        );
        assert_eq!(optimal_value(&b).1.knot(), 1);
    }

    #[test]
    fn constant_automaton_lasso_value() {
        let a = nfa(2, vec![0], vec![vec![vec![0], vec![0]]], vec![r(1, 3)]);
        let w = LassoWord::new(vec![1, 0], vec![1]).unwrap();
        assert_eq!(lasso_value(&a, &w).unwrap(), r(1, 3));
        assert!(matches!(
            lasso_value(&a, &LassoWord::new(vec![], vec![2]).unwrap()),
            Err(AutomatonError::LetterOutOfRange { .. })
        ));
    }

    /// Classical Büchi check on a lasso: some accepting state recurs.
    fn buchi_accepts(a: &AcceptanceAutomaton, w: &LassoWord) -> bool {
        let p = w.positions();
        let n = a.num_states();
        let idx = |q: usize, pos: usize| q * p + pos;
        let mut adj = vec![Vec::new(); n * p];
        for q in 0..n {
            for pos in 0..p {
                for &t in a.successors(q, w.letter_at(pos)) {
                    adj[idx(q, pos)].push(idx(t, w.next(pos)));
                }
            }
        }
        let init: Vec<usize> = a.initial().iter().map(|&q| idx(q, 0)).collect();
        let reach = bfs_distances(&adj, &init);
        let cyc = on_cycle(&adj);
        (0..n * p).any(|v| reach[v] != usize::MAX && cyc[v] && a.acceptance(v / p).is_one())
    }

    #[test]
    fn boolean_specialization_matches_buchi() {
        // accepts words with infinitely many a1
        let a = nfa(
            2,
            vec![0],
            vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]],
            vec![r(0, 1), r(1, 1)],
        );
        for w in all_lassos(2, 2, 3) {
            let expected = w.cycle.contains(&1);
            assert_eq!(buchi_accepts(&a, &w), expected);
            assert_eq!(lasso_value(&a, &w).unwrap().is_one(), expected);
        }
    }

    /// Enumerates run lassos of the synchronized product up to a bound.
    fn brute_lasso_value(a: &AcceptanceAutomaton, w: &LassoWord) -> Rat01 {
        let p = w.positions();
        let n = a.num_states();
        let bound = n * p + 1;
        let mut best = Rat01::zero();
        // DFS over run prefixes of length ≤ |u| + bound·|v|; track values
        // seen on repeated product states.
        fn go(
            a: &AcceptanceAutomaton,
            w: &LassoWord,
            path: &mut Vec<(usize, usize)>,
            limit: usize,
            best: &mut Rat01,
        ) {
            let &(q, pos) = path.last().unwrap();
            if let Some(start) = path[..path.len() - 1].iter().position(|&x| x == (q, pos)) {
                let m = path[start..]
                    .iter()
                    .map(|&(s, _)| a.acceptance(s).clone())
                    .max()
                    .unwrap();
                if m > *best {
                    *best = m;
                }
                return;
            }
            if path.len() > limit {
                return;
            }
            for &t in a.successors(q, w.letter_at(pos)) {
                path.push((t, w.next(pos)));
                go(a, w, path, limit, best);
                path.pop();
            }
        }
        for &q in a.initial() {
            go(a, w, &mut vec![(q, 0)], bound, &mut best);
        }
        best
    }

    #[test]
    fn three_state_lasso_values_match_enumeration() {
        let a = nfa(
            2,
            vec![0],
            vec![
                vec![vec![0, 1], vec![2]],
                vec![vec![2], vec![1]],
                vec![vec![0], vec![1, 2]],
            ],
            vec![r(0, 1), r(1, 2), r(1, 1)],
        );
        for w in all_lassos(2, 2, 2) {
            assert_eq!(lasso_value(&a, &w).unwrap(), brute_lasso_value(&a, &w), "{w:?}");
        }
    }

    #[test]
    fn alt_leaf_and_self_loop() {
        let leaf = alt(2, vec![0], vec![vec![Dnf::leaf(r(2, 3)), Dnf::leaf(r(2, 3))]], vec![r(0, 1)]);
        let w = LassoWord::new(vec![0], vec![1, 0]).unwrap();
        assert_eq!(alt_lasso_value(&leaf, &w).unwrap(), r(2, 3));
        let looping = alt(1, vec![0], vec![vec![Dnf::state(0)]], vec![r(1, 1)]);
        assert_eq!(
            alt_lasso_value(&looping, &LassoWord::new(vec![], vec![0]).unwrap()).unwrap(),
            r(1, 1)
        );
    }

    #[test]
    fn alt_conjunction_takes_min_over_paths() {
        let both = Dnf::state(1).and(&Dnf::state(2));
        let a = alt(
            1,
            vec![0],
            vec![vec![both], vec![Dnf::state(1)], vec![Dnf::state(2)]],
            vec![r(0, 1), r(1, 4), r(3, 4)],
        );
        let w = LassoWord::new(vec![], vec![0]).unwrap();
        assert_eq!(alt_lasso_value(&a, &w).unwrap(), r(1, 4));
        let d = dealternate(&a);
        assert_eq!(lasso_value(&d, &w).unwrap(), r(1, 4));
    }

    #[test]
    fn nondeterministic_dealternation_is_identity_on_language() {
        let a = nfa(
            1,
            vec![0],
            vec![vec![vec![0, 1]], vec![vec![2]], vec![vec![1]]],
            vec![r(1, 4), r(0, 1), r(3, 4)],
        );
        let d = dealternate(&a.to_alternating());
        for w in all_lassos(1, 3, 3) {
            assert_eq!(lasso_value(&d, &w).unwrap(), lasso_value(&a, &w).unwrap());
        }
    }

    #[test]
    fn dnf_normalization() {
        let a = Dnf::from_disjuncts(vec![
            Conjunct::new(vec![1, 2], r(1, 2)),
            Conjunct::new(vec![1], r(3, 4)),
            Conjunct::new(vec![], r(0, 1)),
            Conjunct::new(vec![3], r(0, 1)),
        ]);
        assert_eq!(a.disjuncts(), &[Conjunct::new(vec![1], r(3, 4))]);
        let z = Dnf::from_disjuncts(vec![Conjunct::new(vec![3], r(0, 1))]);
        assert_eq!(z.disjuncts(), &[Conjunct::new(vec![], r(0, 1))]);
    }

    #[test]
    fn average_of_constants() {
        let one = nfa(1, vec![0], vec![vec![vec![0]]], vec![r(1, 1)]);
        let zero = nfa(1, vec![0], vec![vec![vec![0]]], vec![r(0, 1)]);
        let avg = apply_quality_op(&QualityOp::avg(), &[one.clone(), zero]).unwrap();
        let w = LassoWord::new(vec![], vec![0]).unwrap();
        assert_eq!(lasso_value(&avg, &w).unwrap(), r(1, 2));
        assert!(matches!(
            apply_quality_op(&QualityOp::avg(), &[one]),
            Err(AutomatonError::Arity { .. })
        ));
    }

    #[test]
    fn identity_operator_preserves_language() {
        let a = nfa(
            2,
            vec![0],
            vec![vec![vec![0], vec![1]], vec![vec![0, 1], vec![1]]],
            vec![r(1, 3), r(2, 3)],
        );
        let id = apply_quality_op(&QualityOp::identity(), std::slice::from_ref(&a)).unwrap();
        for w in all_lassos(2, 2, 2) {
            assert_eq!(lasso_value(&id, &w).unwrap(), lasso_value(&a, &w).unwrap());
        }
    }

    #[test]
    fn alphabet_mismatch_is_rejected() {
        let a = nfa(1, vec![0], vec![vec![vec![0]]], vec![r(1, 1)]);
        let b = nfa(2, vec![0], vec![vec![vec![0], vec![0]]], vec![r(1, 1)]);
        assert!(matches!(
            apply_quality_op(&QualityOp::avg(), &[a, b]),
            Err(AutomatonError::AlphabetMismatch)
        ));
    }

    #[test]
    fn dead_ends_are_rejected() {
        let res = AcceptanceAutomaton::new(
            Alphabet::symbols(1),
            vec!["q0".into()],
            vec![0],
            vec![vec![vec![]]],
            vec![r(1, 1)],
        );
        assert!(matches!(res, Err(AutomatonError::DeadEnd { .. })));
    }

    pub(crate) fn random_nfa(rng: &mut ChaCha8Rng, max_states: usize, letters: usize) -> AcceptanceAutomaton {
        let n = rng.gen_range(1..=max_states);
        let vals = [r(0, 1), r(1, 4), r(1, 2), r(3, 4), r(1, 1)];
        let delta = (0..n)
            .map(|_| {
                (0..letters)
                    .map(|_| {
                        let k = rng.gen_range(1..=2.min(n));
                        (0..k).map(|_| rng.gen_range(0..n)).collect()
                    })
                    .collect()
            })
            .collect();
        let acc = (0..n).map(|_| vals[rng.gen_range(0..vals.len())].clone()).collect();
        nfa(letters, vec![0], delta, acc)
    }

    #[test]
    fn optimum_matches_exhaustive_lassos_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_nfa(&mut rng, 4, 2);
            let (v, run) = optimal_value(&a);
            assert!(run.is_run_of(&a));
            assert_eq!(lasso_value(&a, &run.word).unwrap(), v);
            let n = a.num_states();
            let best = all_lassos(2, n, n)
                .iter()
                .map(|w| lasso_value(&a, w).unwrap())
                .max()
                .unwrap();
            assert_eq!(v, best);
        }
    }

    #[test]
    fn json_round_trip() {
        let a = alt(
            2,
            vec![0],
            vec![
                vec![Dnf::state(1).and(&Dnf::leaf(r(1, 2))), Dnf::leaf(r(1, 3))],
                vec![Dnf::state(0).or(&Dnf::state(1)), Dnf::state(1)],
            ],
            vec![r(0, 1), r(1, 1)],
        );
        let text = serde_json::to_string(&AutomatonFile::from_alternating(&a)).unwrap();
        assert!(text.contains("\"1/2\""));
        let back: AutomatonFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_alternating().unwrap(), a);
        assert!(back.to_acceptance().is_err());
        let n = nfa(1, vec![0], vec![vec![vec![0, 1]], vec![vec![1]]], vec![r(0, 1), r(1, 1)]);
        let text = serde_json::to_string(&AutomatonFile::from_acceptance(&n)).unwrap();
        let back: AutomatonFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_acceptance().unwrap(), n);
        let dot = alternating_to_dot(&a);
        assert!(dot.contains("leaf") && dot.starts_with("digraph"));
    }

    #[test]
    fn powerset_letters() {
        let al = Alphabet::powerset(&["p", "q"]);
        assert_eq!(al.len(), 4);
        assert_eq!(al.letter_name(0), "{}");
        assert_eq!(al.letter_name(3), "{p,q}");
        assert_eq!(al.parse_letter("{q}").unwrap(), 2);
        assert_eq!(al.parse_letter("{ q , p }").unwrap(), 3);
        assert!(al.parse_letter("{r}").is_err());
    }
}
