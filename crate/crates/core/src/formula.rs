//! Formulas of LTL with discounting and propositional quality operators.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_rational::BigRational;
use thiserror::Error;

use crate::values::{parse_rational, ExpDiscount, Rat01};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown operator `{name}` at byte {pos}")]
    UnknownOperator { pos: usize, name: String },
    #[error("discount or parameter {value} at byte {pos} must lie strictly between 0 and 1")]
    BadConstant { pos: usize, value: String },
    #[error("operator `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("operator `{0}` is not monotone")]
    NonMonotone(String),
    #[error("operator `{0}` has no margin-transfer function")]
    MissingTransfer(String),
}

pub type Evaluator = Arc<dyn Fn(&[Rat01]) -> Rat01 + Send + Sync>;
pub type Transfer = Arc<dyn Fn(&Rat01) -> Rat01 + Send + Sync>;

/// A propositional quality operator `f : [0,1]^k → [0,1]`.
///
/// `transfer` is a modulus of uniform continuity: for `δ > 0` it returns
/// `ε′ > 0` such that moving every argument by at most `ε′` moves `f` by at
/// most `δ`. Identity is by name, parameters and arity.
#[derive(Clone)]
pub struct QualityOp {
    name: String,
    params: Vec<Rat01>,
    arity: usize,
    monotone: bool,
    eval: Evaluator,
    transfer: Option<Transfer>,
}

impl QualityOp {
    pub fn new(
        name: impl Into<String>,
        params: Vec<Rat01>,
        arity: usize,
        monotone: bool,
        eval: Evaluator,
        transfer: Option<Transfer>,
    ) -> Self {
        QualityOp {
            name: name.into(),
            params,
            arity,
            monotone,
            eval,
            transfer,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[Rat01] {
        &self.params
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn has_transfer(&self) -> bool {
        self.transfer.is_some()
    }

    /// `(v₁ + v₂)/2`
    pub fn avg() -> Self {
        let two = Rat01::frac(1, 2);
        QualityOp::new(
            "avg",
            vec![],
            2,
            true,
            Arc::new(move |x: &[Rat01]| {
                Rat01::clamp((x[0].as_big() + x[1].as_big()) * two.as_big())
            }),
            Some(identity_transfer()),
        )
    }

    pub fn min() -> Self {
        QualityOp::new(
            "min",
            vec![],
            2,
            true,
            Arc::new(|x: &[Rat01]| x[0].clone().min(x[1].clone())),
            Some(identity_transfer()),
        )
    }

    pub fn max() -> Self {
        QualityOp::new(
            "max",
            vec![],
            2,
            true,
            Arc::new(|x: &[Rat01]| x[0].clone().max(x[1].clone())),
            Some(identity_transfer()),
        )
    }

    /// `v ↦ λ·v`
    pub fn scale(lambda: Rat01) -> Self {
        let l = lambda.clone();
        QualityOp::new(
            "scale",
            vec![lambda],
            1,
            true,
            Arc::new(move |x: &[Rat01]| l.mul(&x[0])),
            Some(identity_transfer()),
        )
    }

    /// `v ↦ λ·v + (1 − λ)`
    pub fn lift(lambda: Rat01) -> Self {
        let l = lambda.clone();
        QualityOp::new(
            "lift",
            vec![lambda],
            1,
            true,
            Arc::new(move |x: &[Rat01]| l.mul(&x[0]).sat_add(&l.complement())),
            Some(identity_transfer()),
        )
    }

    /// The unary identity; handy as a neutral element in tests.
    pub fn identity() -> Self {
        QualityOp::new(
            "id",
            vec![],
            1,
            true,
            Arc::new(|x: &[Rat01]| x[0].clone()),
            Some(identity_transfer()),
        )
    }

    pub fn eval(&self, args: &[Rat01]) -> Result<Rat01, FormulaError> {
        if args.len() != self.arity {
            return Err(FormulaError::Arity {
                name: self.name.clone(),
                expected: self.arity,
                got: args.len(),
            });
        }
        Ok((self.eval)(args))
    }

    pub fn margin_transfer(&self, delta: &Rat01) -> Result<Rat01, FormulaError> {
        match &self.transfer {
            Some(t) => Ok(t(delta)),
            None => Err(FormulaError::MissingTransfer(self.name.clone())),
        }
    }

    /// `(d·f)*(x) = 1 − d·f(1−x₁,…,1−x_k)`.
    pub fn dualize(&self, d: &Rat01) -> QualityOp {
        let name = format!("dual[{d}]{}", self.name);
        if d.is_zero() {
            return QualityOp::new(
                name,
                self.params.clone(),
                self.arity,
                true,
                Arc::new(|_: &[Rat01]| Rat01::one()),
                Some(identity_transfer()),
            );
        }
        let inner = self.eval.clone();
        let dd = d.clone();
        let eval: Evaluator = Arc::new(move |x: &[Rat01]| {
            let flipped: Vec<Rat01> = x.iter().map(Rat01::complement).collect();
            dd.mul(&inner(&flipped)).complement()
        });
        let transfer = self.transfer.clone().map(|t| {
            let dd = d.clone();
            Arc::new(move |delta: &Rat01| {
                let scaled = Rat01::clamp(delta.as_big() / dd.as_big());
                t(&scaled)
            }) as Transfer
        });
        QualityOp::new(name, self.params.clone(), self.arity, self.monotone, eval, transfer)
    }

    /// `x ↦ d⃗ ⊠ f(x)`; monotone when the sequence has odd length.
    pub fn acted(&self, seq: &crate::values::DiscountSeq) -> QualityOp {
        let inner = self.eval.clone();
        let s = seq.clone();
        QualityOp::new(
            format!("{seq}*{}", self.name),
            self.params.clone(),
            self.arity,
            self.monotone && seq.is_odd(),
            Arc::new(move |x: &[Rat01]| s.act(&inner(x))),
            self.transfer.clone(),
        )
    }

    /// Grid check of monotonicity on `{0, 1/4, 1/2, 3/4, 1}^k`.
    pub fn check_monotone_on_grid(&self) -> bool {
        let grid: Vec<Rat01> = (0..=4).map(|i| Rat01::frac(i, 4)).collect();
        let k = self.arity;
        let total = grid.len().pow(k as u32);
        for idx in 0..total {
            let mut rem = idx;
            let point: Vec<Rat01> = (0..k)
                .map(|_| {
                    let g = grid[rem % grid.len()].clone();
                    rem /= grid.len();
                    g
                })
                .collect();
            let here = (self.eval)(&point);
            for i in 0..k {
                for hi in grid.iter().filter(|g| **g > point[i]) {
                    let mut up = point.clone();
                    up[i] = hi.clone();
                    if (self.eval)(&up) < here {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn identity_transfer() -> Transfer {
    Arc::new(|d: &Rat01| d.clone())
}

impl PartialEq for QualityOp {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.params == other.params && self.arity == other.arity
    }
}

impl Eq for QualityOp {}

impl Hash for QualityOp {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.params.hash(state);
        self.arity.hash(state);
    }
}

impl fmt::Debug for QualityOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.params.is_empty() {
            write!(f, "{:?}", self.params)?;
        }
        Ok(())
    }
}

pub fn eval_quality_op(op: &QualityOp, args: &[Rat01]) -> Result<Rat01, FormulaError> {
    op.eval(args)
}

pub fn margin_transfer(op: &QualityOp, delta: &Rat01) -> Result<Rat01, FormulaError> {
    op.margin_transfer(delta)
}

pub fn dualize_quality_op(op: &QualityOp, d: &Rat01) -> QualityOp {
    op.dualize(d)
}

type OpFactory = Arc<dyn Fn(&[Rat01]) -> Result<QualityOp, String> + Send + Sync>;

/// Named operators available to the parser.
#[derive(Clone)]
pub struct OpRegistry {
    factories: HashMap<String, (usize, OpFactory)>,
}

impl Default for OpRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl OpRegistry {
    pub fn empty() -> Self {
        OpRegistry {
            factories: HashMap::new(),
        }
    }

    /// `avg`, `min`, `max` (no parameters) and `scale{λ}`, `lift{λ}`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.insert("avg", 0, Arc::new(|_| Ok(QualityOp::avg())));
        r.insert("min", 0, Arc::new(|_| Ok(QualityOp::min())));
        r.insert("max", 0, Arc::new(|_| Ok(QualityOp::max())));
        r.insert("scale", 1, Arc::new(|p| Ok(QualityOp::scale(p[0].clone()))));
        r.insert("lift", 1, Arc::new(|p| Ok(QualityOp::lift(p[0].clone()))));
        r
    }

    fn insert(&mut self, name: &str, nparams: usize, f: OpFactory) {
        self.factories.insert(name.to_string(), (nparams, f));
    }

    /// Register a parameterless user operator. Rejected unless it is flagged
    /// monotone, passes the grid check and carries a margin transfer.
    pub fn register(&mut self, op: QualityOp) -> Result<(), FormulaError> {
        if !op.is_monotone() || !op.check_monotone_on_grid() {
            return Err(FormulaError::NonMonotone(op.name().to_string()));
        }
        if !op.has_transfer() {
            return Err(FormulaError::MissingTransfer(op.name().to_string()));
        }
        let name = op.name().to_string();
        self.insert(&name, 0, Arc::new(move |_| Ok(op.clone())));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    fn build(&self, name: &str, params: &[Rat01], pos: usize) -> Result<QualityOp, FormulaError> {
        let (n, f) = self
            .factories
            .get(name)
            .ok_or_else(|| FormulaError::UnknownOperator {
                pos,
                name: name.to_string(),
            })?;
        if *n != params.len() {
            return Err(FormulaError::Syntax {
                pos,
                msg: format!("operator `{name}` takes {n} parameter(s), got {}", params.len()),
            });
        }
        f(params).map_err(|msg| FormulaError::Syntax { pos, msg })
    }
}

/// Abstract syntax. Derived forms (F, G, their discounted versions, ∨)
/// are desugared on construction.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Atom(String),
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Next(Arc<Formula>),
    Until(Arc<Formula>, Arc<Formula>),
    UntilDisc(ExpDiscount, Arc<Formula>, Arc<Formula>),
    Apply(QualityOp, Vec<Arc<Formula>>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Arc::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Arc::new(a), Arc::new(b))
    }

    /// `¬(¬a ∧ ¬b)`
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::and(Formula::not(a), Formula::not(b)))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Arc::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Arc::new(a), Arc::new(b))
    }

    pub fn until_disc(eta: ExpDiscount, a: Formula, b: Formula) -> Formula {
        Formula::UntilDisc(eta, Arc::new(a), Arc::new(b))
    }

    pub fn eventually(f: Formula) -> Formula {
        Formula::until(Formula::True, f)
    }

    pub fn always(f: Formula) -> Formula {
        Formula::not(Formula::eventually(Formula::not(f)))
    }

    pub fn eventually_disc(eta: ExpDiscount, f: Formula) -> Formula {
        Formula::until_disc(eta, Formula::True, f)
    }

    pub fn always_disc(eta: ExpDiscount, f: Formula) -> Formula {
        Formula::not(Formula::eventually_disc(eta, Formula::not(f)))
    }

    pub fn apply(op: QualityOp, args: Vec<Formula>) -> Result<Formula, FormulaError> {
        if args.len() != op.arity() {
            return Err(FormulaError::Arity {
                name: op.name().to_string(),
                expected: op.arity(),
                got: args.len(),
            });
        }
        Ok(Formula::Apply(op, args.into_iter().map(Arc::new).collect()))
    }

    /// AST node count plus bit-length of every rational constant.
    pub fn size(&self) -> u64 {
        match self {
            Formula::True | Formula::Atom(_) => 1,
            Formula::Not(a) | Formula::Next(a) => 1 + a.size(),
            Formula::And(a, b) | Formula::Until(a, b) => 1 + a.size() + b.size(),
            Formula::UntilDisc(eta, a, b) => 1 + eta.base().bit_length() + a.size() + b.size(),
            Formula::Apply(op, args) => {
                1 + op.params().iter().map(Rat01::bit_length).sum::<u64>()
                    + args.iter().map(|a| a.size()).sum::<u64>()
            }
        }
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True => {}
            Formula::Atom(p) => {
                out.insert(p.clone());
            }
            Formula::Not(a) | Formula::Next(a) => a.collect_atoms(out),
            Formula::And(a, b) | Formula::Until(a, b) | Formula::UntilDisc(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Formula::Apply(_, args) => args.iter().for_each(|a| a.collect_atoms(out)),
        }
    }

    /// Largest number of negations on any root-to-leaf path.
    pub fn negation_depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(a) => 1 + a.negation_depth(),
            Formula::Next(a) => a.negation_depth(),
            Formula::And(a, b) | Formula::Until(a, b) | Formula::UntilDisc(_, a, b) => {
                a.negation_depth().max(b.negation_depth())
            }
            Formula::Apply(_, args) => args.iter().map(|a| a.negation_depth()).max().unwrap_or(0),
        }
    }

    pub fn has_discount(&self) -> bool {
        match self {
            Formula::True | Formula::Atom(_) => false,
            Formula::UntilDisc(..) => true,
            Formula::Not(a) | Formula::Next(a) => a.has_discount(),
            Formula::And(a, b) | Formula::Until(a, b) => a.has_discount() || b.has_discount(),
            Formula::Apply(_, args) => args.iter().any(|a| a.has_discount()),
        }
    }

    pub fn has_quality_op(&self) -> bool {
        match self {
            Formula::True | Formula::Atom(_) => false,
            Formula::Apply(..) => true,
            Formula::Not(a) | Formula::Next(a) => a.has_quality_op(),
            Formula::And(a, b) | Formula::Until(a, b) | Formula::UntilDisc(_, a, b) => {
                a.has_quality_op() || b.has_quality_op()
            }
        }
    }

    fn is_primary(&self) -> bool {
        matches!(self, Formula::True | Formula::Atom(_) | Formula::Apply(..))
    }
}

fn fmt_discount(f: &mut fmt::Formatter<'_>, eta: &ExpDiscount) -> fmt::Result {
    if eta.shift() == 0 {
        write!(f, "{{{}}}", eta.base())
    } else {
        write!(f, "{{{}+{}}}", eta.base(), eta.shift())
    }
}

fn fmt_operand(f: &mut fmt::Formatter<'_>, x: &Formula) -> fmt::Result {
    if x.is_primary() || matches!(x, Formula::Not(_) | Formula::Next(_)) {
        write!(f, "{x}")
    } else {
        write!(f, "({x})")
    }
}

/// Fully parenthesized concrete syntax that parses back to the same tree.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Atom(p) => write!(f, "{p}"),
            Formula::Not(a) => {
                write!(f, "!")?;
                fmt_operand(f, a)
            }
            Formula::Next(a) => {
                write!(f, "X ")?;
                fmt_operand(f, a)
            }
            Formula::And(a, b) => {
                fmt_operand(f, a)?;
                write!(f, " & ")?;
                fmt_operand(f, b)
            }
            Formula::Until(a, b) => {
                fmt_operand(f, a)?;
                write!(f, " U ")?;
                fmt_operand(f, b)
            }
            Formula::UntilDisc(eta, a, b) => {
                fmt_operand(f, a)?;
                write!(f, " U")?;
                fmt_discount(f, eta)?;
                write!(f, " ")?;
                fmt_operand(f, b)
            }
            Formula::Apply(op, args) => {
                write!(f, "{}", op.name())?;
                if !op.params().is_empty() {
                    write!(f, "{{")?;
                    for (i, p) in op.params().iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{p}")?;
                    }
                    write!(f, "}}")?;
                }
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Annot(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, FormulaError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let t = lx.next_tok()?;
            let end = t.0 == Tok::End;
            out.push(t);
            if end {
                return Ok(out);
            }
        }
    }

    fn next_tok(&mut self) -> Result<(Tok, usize), FormulaError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let simple = match c {
            b'!' => Some(Tok::Not),
            b'&' => Some(Tok::And),
            b'|' => Some(Tok::Or),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok((t, start));
        }
        if c == b'{' {
            let close = self.src[start..].find('}').ok_or(FormulaError::Syntax {
                pos: start,
                msg: "unterminated `{`".into(),
            })?;
            self.pos = start + close + 1;
            return Ok((Tok::Annot(self.src[start + 1..start + close].to_string()), start));
        }
        if c.is_ascii_alphabetic() {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        Err(FormulaError::Syntax {
            pos: start,
            msg: format!("unexpected character `{}`", self.src[start..].chars().next().unwrap()),
        })
    }
}

struct Parser<'r> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    ops: &'r OpRegistry,
}

impl<'r> Parser<'r> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), FormulaError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn is_keyword(name: &str) -> bool {
        matches!(name, "X" | "F" | "G" | "U" | "true")
    }

    fn or_expr(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.until_expr()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.until_expr()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until_expr(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.unary()?;
        if let Tok::Ident(name) = self.peek() {
            if name == "U" {
                self.bump();
                let eta = self.opt_discount()?;
                let rhs = self.until_expr()?;
                return Ok(match eta {
                    Some(eta) => Formula::until_disc(eta, lhs, rhs),
                    None => Formula::until(lhs, rhs),
                });
            }
        }
        Ok(lhs)
    }

    fn opt_discount(&mut self) -> Result<Option<ExpDiscount>, FormulaError> {
        let Tok::Annot(text) = self.peek().clone() else {
            return Ok(None);
        };
        let pos = self.pos();
        self.bump();
        let (base, shift) = match text.split_once('+') {
            Some((b, s)) => {
                let shift: u64 = s.trim().parse().map_err(|_| FormulaError::Syntax {
                    pos,
                    msg: format!("bad discount shift `{s}`"),
                })?;
                (b, shift)
            }
            None => (text.as_str(), 0),
        };
        let lambda = self.open_unit(base, pos)?;
        Ok(Some(
            ExpDiscount::with_shift(lambda, shift).expect("checked open interval"),
        ))
    }

    fn open_unit(&self, text: &str, pos: usize) -> Result<Rat01, FormulaError> {
        let v: BigRational = parse_rational(text).map_err(|e| FormulaError::Syntax {
            pos,
            msg: e.to_string(),
        })?;
        let r = Rat01::from_big(v.clone()).map_err(|_| FormulaError::BadConstant {
            pos,
            value: v.to_string(),
        })?;
        if r.is_zero() || r.is_one() {
            return Err(FormulaError::BadConstant {
                pos,
                value: r.to_string(),
            });
        }
        Ok(r)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Ident(name) if name == "X" => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Tok::Ident(name) if name == "F" || name == "G" => {
                self.bump();
                let eta = self.opt_discount()?;
                let body = self.unary()?;
                Ok(match (name.as_str(), eta) {
                    ("F", None) => Formula::eventually(body),
                    ("F", Some(e)) => Formula::eventually_disc(e, body),
                    (_, None) => Formula::always(body),
                    (_, Some(e)) => Formula::always_disc(e, body),
                })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::LParen => {
                let f = self.or_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(name) if name == "true" => Ok(Formula::True),
            Tok::Ident(name) if Self::is_keyword(&name) => Err(FormulaError::Syntax {
                pos,
                msg: format!("unexpected keyword `{name}`"),
            }),
            Tok::Ident(name) => {
                if matches!(self.peek(), Tok::LParen | Tok::Annot(_)) {
                    return self.call(name, pos);
                }
                if !name.as_bytes()[0].is_ascii_lowercase() {
                    return Err(FormulaError::Syntax {
                        pos,
                        msg: format!("atom `{name}` must start with a lowercase letter"),
                    });
                }
                Ok(Formula::Atom(name))
            }
            Tok::End => Err(FormulaError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            other => Err(FormulaError::Syntax {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn call(&mut self, name: String, pos: usize) -> Result<Formula, FormulaError> {
        let mut params = Vec::new();
        if let Tok::Annot(text) = self.peek().clone() {
            let apos = self.pos();
            self.bump();
            for piece in text.split(',') {
                params.push(self.open_unit(piece, apos)?);
            }
        }
        let op = self.ops.build(&name, &params, pos)?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.or_expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.or_expr()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Formula::apply(op, args)
    }
}

/// Parse with the built-in operator set.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    parse_formula_with(text, &OpRegistry::with_builtins())
}

pub fn parse_formula_with(text: &str, ops: &OpRegistry) -> Result<Formula, FormulaError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0, ops };
    let f = p.or_expr()?;
    if *p.peek() != Tok::End {
        return p.err("trailing input");
    }
    Ok(f)
}

pub fn formula_size(f: &Formula) -> u64 {
    f.size()
}
