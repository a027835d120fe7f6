//! Compilation of a formula and a margin into an alternating
//! `[0,1]`-acceptance automaton whose language is within the margin below
//! the truth value.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use thiserror::Error;

use crate::automata::{
    apply_quality_op_with, dealternate_with, AcceptanceAutomaton, Alphabet, AlternatingAutomaton,
    bisimulation_quotient, AutomatonError, Conjunct, DealternateOptions, Dnf,
};
use crate::formula::{Formula, FormulaError, QualityOp};
use crate::values::{Discount, DiscountSeq, ExpDiscount, Rat01, ValueError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("margin {0} must lie strictly between 0 and 1")]
    BadMargin(String),
    #[error("operator `{0}` is not monotone")]
    NonMonotone(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error("formula must be free of discounting and quality operators")]
    NotBoolean,
    #[error("margin transfer of `{0}` returned 0")]
    ZeroTransfer(String),
}

/// The margin `ε ∈ (0,1)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Margin(Rat01);

impl Margin {
    pub fn new(eps: Rat01) -> Result<Self, TranslateError> {
        if eps.is_zero() || eps.is_one() {
            return Err(TranslateError::BadMargin(eps.to_string()));
        }
        Ok(Margin(eps))
    }

    pub fn frac(p: u64, q: u64) -> Self {
        Margin::new(Rat01::frac(p, q)).expect("margin in (0,1)")
    }

    pub fn value(&self) -> &Rat01 {
        &self.0
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Margin {
    type Err = TranslateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Rat01 = s
            .parse()
            .map_err(|e: ValueError| TranslateError::BadMargin(e.to_string()))?;
        Margin::new(v)
    }
}

/// Least `k` with `η(k) · running_product ≤ ε`.
pub fn event_horizon(eta: &ExpDiscount, running_product: &Rat01, eps: &Margin) -> u64 {
    let mut k = 0;
    let mut cur = eta.value(0).as_big() * running_product.as_big();
    while &cur > eps.value().as_big() {
        cur *= eta.base().as_big();
        k += 1;
    }
    k
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Node {
    /// `(ψ, d⃗)` of the construction.
    Formula(Formula, DiscountSeq),
    /// State `j` of the nondeterministic automaton embedded as block `b`.
    Embedded(usize, usize),
}

struct Block {
    automaton: AcceptanceAutomaton,
    /// Global ids of the block's states, assigned on first reference.
    ids: Vec<Option<usize>>,
}

struct Builder<'a> {
    eps: Margin,
    alphabet: Alphabet,
    aps: &'a [String],
    opts: DealternateOptions,
    ids: HashMap<Node, usize>,
    nodes: Vec<Node>,
    queue: VecDeque<usize>,
    blocks: Vec<Block>,
    block_ids: HashMap<(QualityOp, Vec<Formula>, DiscountSeq), usize>,
}

impl<'a> Builder<'a> {
    fn intern(&mut self, node: Node) -> usize {
        if let Some(&id) = self.ids.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.ids.insert(node, id);
        self.queue.push_back(id);
        id
    }

    fn embedded(&mut self, block: usize, j: usize) -> usize {
        if let Some(id) = self.blocks[block].ids[j] {
            return id;
        }
        let id = self.intern(Node::Embedded(block, j));
        self.blocks[block].ids[j] = Some(id);
        id
    }

    fn holds(&self, p: &str, letter: usize) -> bool {
        let i = self.aps.iter().position(|a| a == p).expect("atom in alphabet");
        letter >> i & 1 == 1
    }

    fn exceeds_margin(&self, prod: &BigRational) -> bool {
        prod > self.eps.value().as_big()
    }

    /// `δ((ψ, d⃗), σ)` with the clauses for subformulas substituted inline.
    fn delta(&mut self, psi: &Formula, d: &DiscountSeq, letter: usize) -> Result<Dnf, TranslateError> {
        Ok(match psi {
            Formula::True => Dnf::leaf(d.act(&Rat01::one())),
            Formula::Atom(p) => {
                let v = if self.holds(p, letter) { Rat01::one() } else { Rat01::zero() };
                Dnf::leaf(d.act(&v))
            }
            Formula::Not(a) => self.delta(a, &d.append(Rat01::one()), letter)?,
            Formula::And(a, b) => {
                let x = self.delta(a, d, letter)?;
                let y = self.delta(b, d, letter)?;
                if d.is_odd() {
                    x.and(&y)
                } else {
                    x.or(&y)
                }
            }
            Formula::Next(a) => Dnf::state(self.intern(Node::Formula((**a).clone(), d.clone()))),
            Formula::Until(a, b) => {
                let me = Dnf::state(self.intern(Node::Formula(psi.clone(), d.clone())));
                let x2 = self.delta(b, d, letter)?;
                let x1 = self.delta(a, d, letter)?;
                if d.is_odd() {
                    x2.or(&x1.and(&me))
                } else {
                    x2.and(&x1.or(&me))
                }
            }
            Formula::UntilDisc(eta, a, b) => {
                let e = eta.value(0);
                if !self.exceeds_margin(&(e.as_big() * d.product())) {
                    // beyond the event horizon
                    let v = if d.is_odd() { Rat01::zero() } else { e };
                    return Ok(Dnf::leaf(d.act(&v)));
                }
                let inner = d.odot(&e);
                let later = Formula::UntilDisc(eta.shifted(1), a.clone(), b.clone());
                let next = Dnf::state(self.intern(Node::Formula(later, d.clone())));
                let x2 = self.delta(b, &inner, letter)?;
                let x1 = self.delta(a, &inner, letter)?;
                if d.is_odd() {
                    x2.or(&x1.and(&next))
                } else {
                    x2.and(&x1.or(&next))
                }
            }
            Formula::Apply(op, args) => self.delta_apply(op, args, d, letter)?,
        })
    }

    fn delta_apply(
        &mut self,
        op: &QualityOp,
        args: &[std::sync::Arc<Formula>],
        d: &DiscountSeq,
        letter: usize,
    ) -> Result<Dnf, TranslateError> {
        if !op.is_monotone() {
            return Err(TranslateError::NonMonotone(op.name().to_string()));
        }
        if !self.exceeds_margin(&d.product()) {
            // d⃗ ⊠ f(x) varies by at most ∏dᵢ ≤ ε, so its lower end suffices
            let v = if d.is_odd() { Rat01::zero() } else { Rat01::one() };
            return Ok(Dnf::leaf(d.act(&v)));
        }
        if !d.is_odd() {
            let last = d.last().clone();
            let dual = op.dualize(&last);
            let negated: Vec<std::sync::Arc<Formula>> = args
                .iter()
                .map(|a| std::sync::Arc::new(Formula::Not(a.clone())))
                .collect();
            let shorter = d.init().expect("even length is at least 2");
            return self.delta_apply(&dual, &negated, &shorter, letter);
        }
        let block = self.block(op, args, d)?;
        let inits: Vec<usize> = self.blocks[block].automaton.initial().to_vec();
        let mut disjuncts = Vec::new();
        for i in inits {
            let succ: Vec<usize> = self.blocks[block].automaton.successors(i, letter).to_vec();
            for j in succ {
                let id = self.embedded(block, j);
                disjuncts.push(Conjunct::new(vec![id], Rat01::one()));
            }
        }
        Ok(Dnf::from_disjuncts(disjuncts))
    }

    /// Build (once) the register product for `d⃗ ⊠ f(φ₁,…,φ_k)` at odd `d⃗`.
    fn block(
        &mut self,
        op: &QualityOp,
        args: &[std::sync::Arc<Formula>],
        d: &DiscountSeq,
    ) -> Result<usize, TranslateError> {
        let key = (op.clone(), args.iter().map(|a| (**a).clone()).collect::<Vec<_>>(), d.clone());
        if let Some(&b) = self.block_ids.get(&key) {
            return Ok(b);
        }
        let delta = Rat01::clamp(self.eps.value().as_big() / d.product());
        let mut inner = op.margin_transfer(&delta)?;
        if inner.is_zero() {
            return Err(TranslateError::ZeroTransfer(op.name().to_string()));
        }
        if inner.is_one() {
            // any smaller ε′ keeps the guarantee
            inner = Rat01::frac(1, 2);
        }
        let inner = Margin::new(inner)?;
        let mut parts = Vec::with_capacity(args.len());
        for a in args {
            let alt = translate_over(a, &inner, self.aps, self.opts)?;
            parts.push(bisimulation_quotient(&dealternate_with(&alt, self.opts)?));
        }
        let g = op.acted(d);
        let automaton = bisimulation_quotient(&apply_quality_op_with(&g, &parts, self.opts)?);
        let n = automaton.num_states();
        self.blocks.push(Block {
            automaton,
            ids: vec![None; n],
        });
        let b = self.blocks.len() - 1;
        self.block_ids.insert(key, b);
        Ok(b)
    }

    fn run(mut self, phi: &Formula) -> Result<AlternatingAutomaton, TranslateError> {
        let start = self.intern(Node::Formula(phi.clone(), DiscountSeq::unit()));
        let nletters = self.alphabet.len();
        let mut delta: Vec<Vec<Dnf>> = Vec::new();
        while let Some(id) = self.queue.pop_front() {
            self.opts.check(id)?;
            let node = self.nodes[id].clone();
            let mut row = Vec::with_capacity(nletters);
            for letter in 0..nletters {
                let dnf = match &node {
                    Node::Formula(psi, d) => self.delta(psi, d, letter)?,
                    Node::Embedded(b, j) => {
                        let succ: Vec<usize> = self.blocks[*b].automaton.successors(*j, letter).to_vec();
                        let ds = succ
                            .into_iter()
                            .map(|t| Conjunct::new(vec![self.embedded(*b, t)], Rat01::one()))
                            .collect();
                        Dnf::from_disjuncts(ds)
                    }
                };
                row.push(dnf);
            }
            if delta.len() <= id {
                delta.resize(id + 1, Vec::new());
            }
            delta[id] = row;
        }
        let acceptance: Vec<Rat01> = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Formula(Formula::Until(..), d) if !d.is_odd() => Rat01::one(),
                Node::Formula(..) => Rat01::zero(),
                Node::Embedded(b, j) => self.blocks[*b].automaton.acceptance(*j).clone(),
            })
            .collect();
        let labels: Vec<String> = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Formula(psi, d) => format!("({psi}, {d})"),
                Node::Embedded(b, j) => {
                    format!("[{b}]{}", self.blocks[*b].automaton.label(*j))
                }
            })
            .collect();
        Ok(AlternatingAutomaton::new(
            self.alphabet,
            labels,
            vec![start],
            delta,
            acceptance,
        )?)
    }
}

/// Translate over the powerset alphabet of `aps`, which must contain every
/// atom of `phi`.
pub fn translate_over(
    phi: &Formula,
    eps: &Margin,
    aps: &[String],
    opts: DealternateOptions,
) -> Result<AlternatingAutomaton, TranslateError> {
    let b = Builder {
        eps: eps.clone(),
        alphabet: Alphabet::powerset(aps),
        aps,
        opts,
        ids: HashMap::new(),
        nodes: Vec::new(),
        queue: VecDeque::new(),
        blocks: Vec::new(),
        block_ids: HashMap::new(),
    };
    b.run(phi)
}

/// `A_{φ,ε}` over the powerset of the atoms of `φ` (in sorted order). The
/// initial state is `(φ, ⟨1⟩)` and only reachable states are built.
pub fn translate(phi: &Formula, eps: &Margin) -> Result<AlternatingAutomaton, TranslateError> {
    translate_with(phi, eps, DealternateOptions::default())
}

pub fn translate_with(
    phi: &Formula,
    eps: &Margin,
    opts: DealternateOptions,
) -> Result<AlternatingAutomaton, TranslateError> {
    let aps: Vec<String> = phi.atoms().into_iter().collect();
    translate_over(phi, eps, &aps, opts)
}

/// Translation of a discount-free, operator-free formula; its language is
/// Boolean.
pub fn sanity_boolean(phi: &Formula) -> Result<AlternatingAutomaton, TranslateError> {
    if phi.has_discount() || phi.has_quality_op() {
        return Err(TranslateError::NotBoolean);
    }
    translate(phi, &Margin::frac(1, 2))
}

/// Size figures reported alongside a translation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct TranslationStats {
    pub formula: String,
    pub epsilon: Rat01,
    pub formula_size: u64,
    pub alternating_states: usize,
    pub leaf_values: usize,
    pub nondeterministic_states: Option<usize>,
}

pub fn translation_stats(
    phi: &Formula,
    eps: &Margin,
    alt: &AlternatingAutomaton,
    na: Option<&AcceptanceAutomaton>,
) -> TranslationStats {
    TranslationStats {
        formula: phi.to_string(),
        epsilon: eps.value().clone(),
        formula_size: phi.size(),
        alternating_states: alt.num_states(),
        leaf_values: alt.leaf_count(),
        nondeterministic_states: na.map(|a| a.num_states()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{dealternate, lasso_value, alt_lasso_value, LassoWord};
    use crate::formula::parse_formula;

    fn r(p: u64, q: u64) -> Rat01 {
        Rat01::frac(p, q)
    }

    fn states(text: &str, p: u64, q: u64) -> (usize, usize) {
        let phi = parse_formula(text).unwrap();
        let a = translate(&phi, &Margin::frac(p, q)).unwrap();
        let na = dealternate(&a);
        (a.num_states(), na.num_states())
    }

    #[test]
    fn horizon_examples() {
        let half = ExpDiscount::new(r(1, 2)).unwrap();
        assert_eq!(event_horizon(&half, &Rat01::one(), &Margin::frac(1, 4)), 2);
        assert_eq!(event_horizon(&half, &r(1, 8), &Margin::frac(1, 4)), 0);
        let slow = ExpDiscount::new(r(99, 100)).unwrap();
        assert_eq!(event_horizon(&slow, &Rat01::one(), &Margin::frac(1, 10)), 230);
    }

    #[test]
    fn margin_rejects_endpoints() {
        assert!(Margin::new(Rat01::zero()).is_err());
        assert!(Margin::new(Rat01::one()).is_err());
        assert!("3/2".parse::<Margin>().is_err());
        assert_eq!("1/10".parse::<Margin>().unwrap(), Margin::frac(1, 10));
    }

    #[test]
    fn first_row_sizes() {
        assert_eq!(states("F{1/2} p1", 1, 10), (5, 10));
        assert_eq!(states("F{1/2} p1", 1, 50), (7, 14));
        assert_eq!(states("F{1/2} p1", 1, 100), (8, 16));
    }

    #[test]
    fn initial_state_is_formula_at_unit_sequence() {
        let phi = parse_formula("p U q").unwrap();
        let a = translate(&phi, &Margin::frac(1, 10)).unwrap();
        assert_eq!(a.label(a.initial()[0]), format!("({phi}, <1>)"));
    }

    #[test]
    fn cutoff_leaf_beyond_horizon() {
        // η(0) = 1/8 ≤ ε = 1/4 at ⟨1⟩: the initial transition is the leaf ⟨1⟩ ⊠ 0
        let phi = Formula::until_disc(
            ExpDiscount::with_shift(r(1, 2), 3).unwrap(),
            Formula::True,
            Formula::atom("p"),
        );
        let a = translate(&phi, &Margin::frac(1, 4)).unwrap();
        assert_eq!(a.num_states(), 1);
        for letter in 0..2 {
            assert_eq!(a.transition(0, letter), &Dnf::leaf(Rat01::zero()));
        }
    }

    #[test]
    fn acceptance_is_one_exactly_on_negated_untils() {
        let phi = parse_formula("G F p & (q U p)").unwrap();
        let a = translate(&phi, &Margin::frac(1, 10)).unwrap();
        for q in 0..a.num_states() {
            let label = a.label(q);
            let positive = a.acceptance(q).is_one();
            assert!(a.acceptance(q).is_zero() || positive);
            if positive {
                assert!(label.contains(" U ") && label.ends_with("<1,1>)"), "{label}");
            }
        }
    }

    #[test]
    fn boolean_sanity() {
        let gf = sanity_boolean(&parse_formula("G F p").unwrap()).unwrap();
        let p = sanity_boolean(&parse_formula("p").unwrap()).unwrap();
        let pu = sanity_boolean(&parse_formula("p U q").unwrap()).unwrap();
        for w in crate::automata::tests::all_lassos(2, 2, 2) {
            let inf_p = w.cycle.iter().any(|&a| a & 1 == 1);
            assert_eq!(alt_lasso_value(&gf, &w).unwrap().is_one(), inf_p);
            let v = alt_lasso_value(&gf, &w).unwrap();
            assert!(v.is_zero() || v.is_one());
            let first = w.letter(0);
            assert_eq!(alt_lasso_value(&p, &w).unwrap().is_one(), first & 1 == 1);
        }
        // letters over {p, q}: q is bit 1
        let w = LassoWord::new(vec![2], vec![0]).unwrap();
        assert_eq!(alt_lasso_value(&pu, &w).unwrap(), Rat01::one());
        assert!(matches!(
            sanity_boolean(&parse_formula("F{1/2} p").unwrap()),
            Err(TranslateError::NotBoolean)
        ));
    }

    #[test]
    fn discount_sequences_bounded_by_negations() {
        for text in ["G{1/2} F p", "!(p U !q) & X !p", "F{1/2} G{1/2} p"] {
            let phi = parse_formula(text).unwrap();
            let a = translate(&phi, &Margin::frac(1, 20)).unwrap();
            let bound = phi.negation_depth() + 1;
            for q in 0..a.num_states() {
                let commas = a.label(q).rsplit('<').next().unwrap().matches(',').count();
                assert!(commas < bound, "{}", a.label(q));
            }
        }
    }

    #[test]
    fn average_translation_agrees_after_dealternation() {
        let phi = parse_formula("avg(F{1/2} p1, G{1/2} p2)").unwrap();
        let a = translate(&phi, &Margin::frac(1, 10)).unwrap();
        let na = dealternate(&a);
        for w in crate::automata::tests::all_lassos(4, 1, 2) {
            assert_eq!(alt_lasso_value(&a, &w).unwrap(), lasso_value(&na, &w).unwrap());
        }
    }
}

