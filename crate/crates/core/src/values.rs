//! Exact truth values, exponential discounting functions and discount
//! sequences.
//!
//! Every quantity in the pipeline is an exact rational. Values are kept in
//! lowest terms so that structural equality coincides with numeric equality,
//! which is what lets automaton states be hash-consed on their discount data.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("value {0} lies outside [0,1]")]
    OutOfRange(String),
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("discount base {0} must lie strictly between 0 and 1")]
    BadBase(String),
    #[error("discount sequence must be nonempty")]
    EmptySequence,
}

/// A rational number in the closed unit interval.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rat01(BigRational);

impl Rat01 {
    pub fn zero() -> Self {
        Rat01(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat01(BigRational::one())
    }

    pub fn new(numer: u64, denom: u64) -> Result<Self, ValueError> {
        if denom == 0 {
            return Err(ValueError::ZeroDenominator(format!("{numer}/{denom}")));
        }
        Self::from_big(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    /// Shorthand for literal constants; panics when `p/q` is not in `[0,1]`.
    pub fn frac(numer: u64, denom: u64) -> Self {
        Self::new(numer, denom).expect("constant outside [0,1]")
    }

    pub fn from_big(value: BigRational) -> Result<Self, ValueError> {
        if value.is_negative() || value > BigRational::one() {
            return Err(ValueError::OutOfRange(value.to_string()));
        }
        Ok(Rat01(value))
    }

    pub fn as_big(&self) -> &BigRational {
        &self.0
    }

    pub fn into_big(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn mul(&self, other: &Rat01) -> Rat01 {
        Rat01(&self.0 * &other.0)
    }

    /// `1 - self`.
    pub fn complement(&self) -> Rat01 {
        Rat01(BigRational::one() - &self.0)
    }

    /// Truncated subtraction `max(self - other, 0)`.
    pub fn monus(&self, other: &Rat01) -> Rat01 {
        let d = &self.0 - &other.0;
        if d.is_negative() {
            Rat01::zero()
        } else {
            Rat01(d)
        }
    }

    /// Saturating addition `min(self + other, 1)`.
    pub fn sat_add(&self, other: &Rat01) -> Rat01 {
        let s = &self.0 + &other.0;
        if s > BigRational::one() {
            Rat01::one()
        } else {
            Rat01(s)
        }
    }

    /// Number of bits needed for numerator plus denominator.
    pub fn bit_length(&self) -> u64 {
        self.0.numer().bits() + self.0.denom().bits()
    }

    /// Clamp an arbitrary rational into `[0,1]`.
    pub fn clamp(value: BigRational) -> Rat01 {
        if value.is_negative() {
            Rat01::zero()
        } else if value > BigRational::one() {
            Rat01::one()
        } else {
            Rat01(value)
        }
    }
}

impl fmt::Display for Rat01 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rat01 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Parses `p/q` or a bare integer into a nonnegative rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ValueError> {
    let t = text.trim();
    let bad = || ValueError::Malformed(t.to_string());
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let (n, d) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    if !digits(n) || !digits(d) {
        return Err(bad());
    }
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(ValueError::ZeroDenominator(t.to_string()));
    }
    Ok(BigRational::new(n, d))
}

impl FromStr for Rat01 {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rat01::from_big(parse_rational(s)?)
    }
}

impl Serialize for Rat01 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rat01 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn pow_big(base: &BigRational, exp: u64) -> BigRational {
    let e = u32::try_from(exp).expect("discount exponent overflow");
    // powers of a reduced fraction stay reduced
    BigRational::new_raw(base.numer().pow(e), base.denom().pow(e))
}

/// A discounting function: strictly decreasing, tending to zero.
pub trait Discount {
    fn value(&self, i: u64) -> Rat01;

    /// Least `i` with `value(i) <= threshold`, or `None` for a nonpositive
    /// threshold (which is never reached).
    fn horizon(&self, threshold: &BigRational) -> Option<u64>;
}

/// `i ↦ base^(shift + i)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ExpDiscount {
    base: Rat01,
    shift: u64,
}

impl ExpDiscount {
    pub fn new(base: Rat01) -> Result<Self, ValueError> {
        if base.is_zero() || base.is_one() {
            return Err(ValueError::BadBase(base.to_string()));
        }
        Ok(ExpDiscount { base, shift: 0 })
    }

    pub fn with_shift(base: Rat01, shift: u64) -> Result<Self, ValueError> {
        Ok(ExpDiscount::new(base)?.shifted(shift))
    }

    pub fn base(&self) -> &Rat01 {
        &self.base
    }

    pub fn shift(&self) -> u64 {
        self.shift
    }

    /// The function `i ↦ η(i + k)`.
    pub fn shifted(&self, k: u64) -> Self {
        ExpDiscount {
            base: self.base.clone(),
            shift: self.shift + k,
        }
    }
}

impl Discount for ExpDiscount {
    fn value(&self, i: u64) -> Rat01 {
        Rat01(pow_big(self.base.as_big(), self.shift + i))
    }

    fn horizon(&self, threshold: &BigRational) -> Option<u64> {
        if !threshold.is_positive() {
            return None;
        }
        let mut i = 0;
        let mut cur = self.value(0).into_big();
        while &cur > threshold {
            cur *= self.base.as_big();
            i += 1;
        }
        Some(i)
    }
}

/// Convenience wrapper for [`Discount::value`].
pub fn discount_value(eta: &ExpDiscount, i: u64) -> Rat01 {
    eta.value(i)
}

/// Nonempty sequence of accumulated discount factors. Its length records
/// the current polarity depth (odd = positive view, even = negated view).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscountSeq(Vec<Rat01>);

impl DiscountSeq {
    pub fn new(entries: Vec<Rat01>) -> Result<Self, ValueError> {
        if entries.is_empty() {
            return Err(ValueError::EmptySequence);
        }
        Ok(DiscountSeq(entries))
    }

    /// The sequence `⟨1⟩`.
    pub fn unit() -> Self {
        DiscountSeq(vec![Rat01::one()])
    }

    pub fn entries(&self) -> &[Rat01] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_odd(&self) -> bool {
        self.0.len() % 2 == 1
    }

    pub fn last(&self) -> &Rat01 {
        self.0.last().expect("nonempty")
    }

    /// Multiply the last entry by `d`.
    pub fn odot(&self, d: &Rat01) -> Self {
        let mut v = self.0.clone();
        let last = v.last_mut().expect("nonempty");
        *last = last.mul(d);
        DiscountSeq(v)
    }

    /// Append `d` as a new last entry.
    pub fn append(&self, d: Rat01) -> Self {
        let mut v = self.0.clone();
        v.push(d);
        DiscountSeq(v)
    }

    /// Drop the last entry; `None` for a singleton.
    pub fn init(&self) -> Option<Self> {
        if self.0.len() < 2 {
            None
        } else {
            Some(DiscountSeq(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Product of all entries.
    pub fn product(&self) -> BigRational {
        self.0
            .iter()
            .fold(BigRational::one(), |acc, d| acc * d.as_big())
    }

    /// The action `d⃗ ⊠ v`, evaluated by the tail recursion
    /// `d⃗d′ ⊠ v = d⃗ ⊠ (1 − d′v)`, `d ⊠ v = dv`.
    pub fn act(&self, v: &Rat01) -> Rat01 {
        let mut x = v.clone();
        for d in self.0[1..].iter().rev() {
            x = d.mul(&x).complement();
        }
        self.0[0].mul(&x)
    }
}

impl fmt::Display for DiscountSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ">")
    }
}

impl fmt::Debug for DiscountSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Free-function forms of the three sequence operators.
pub fn seq_odot(seq: &DiscountSeq, d: &Rat01) -> DiscountSeq {
    seq.odot(d)
}

pub fn seq_append(seq: &DiscountSeq, d: &Rat01) -> DiscountSeq {
    seq.append(d.clone())
}

pub fn seq_act(seq: &DiscountSeq, v: &Rat01) -> Rat01 {
    seq.act(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::Integer;
    use proptest::prelude::*;

    fn r(p: u64, q: u64) -> Rat01 {
        Rat01::frac(p, q)
    }

    fn seq(v: &[(u64, u64)]) -> DiscountSeq {
        DiscountSeq::new(v.iter().map(|&(p, q)| r(p, q)).collect()).unwrap()
    }

    #[test]
    fn odot_examples() {
        let base = seq(&[(1, 4), (8, 27), (3, 4)]);
        assert_eq!(base.odot(&r(4, 5)), seq(&[(1, 4), (8, 27), (3, 5)]));
        assert_eq!(seq(&[(1, 1)]).odot(&r(1, 1)), seq(&[(1, 1)]));
        assert_eq!(seq(&[(1, 2)]).odot(&r(1, 2)), seq(&[(1, 4)]));
    }

    #[test]
    fn append_examples() {
        let base = seq(&[(1, 4), (8, 27), (3, 4)]);
        assert_eq!(
            base.append(r(4, 5)),
            seq(&[(1, 4), (8, 27), (3, 4), (4, 5)])
        );
        assert_eq!(seq(&[(1, 1)]).append(r(1, 1)), seq(&[(1, 1), (1, 1)]));
        assert_eq!(seq(&[(1, 2)]).append(r(0, 1)), seq(&[(1, 2), (0, 1)]));
    }

    #[test]
    fn act_examples() {
        assert_eq!(seq(&[(3, 4), (1, 3), (2, 5)]).act(&r(1, 1)), r(3, 5));
        assert_eq!(seq(&[(1, 1)]).act(&r(2, 7)), r(2, 7));
        assert_eq!(seq(&[(1, 1), (1, 2), (1, 1)]).act(&r(0, 1)), r(1, 2));
        assert_eq!(seq(&[(1, 1), (1, 1)]).act(&r(1, 4)), r(3, 4));
        assert_eq!(seq(&[(1, 1), (1, 1), (1, 1)]).act(&r(2, 3)), r(2, 3));
        assert_eq!(seq(&[(1, 1), (1, 2), (1, 1)]).act(&r(2, 3)), r(5, 6));
    }

    #[test]
    fn discount_examples() {
        let half = ExpDiscount::new(r(1, 2)).unwrap();
        assert_eq!(discount_value(&half, 2), r(1, 4));
        assert_eq!(discount_value(&half.shifted(1), 0), r(1, 2));
        let slow = ExpDiscount::new(r(99, 100)).unwrap();
        assert_eq!(discount_value(&slow, 0), r(1, 1));
    }

    #[test]
    fn horizon_is_least_index() {
        let half = ExpDiscount::new(r(1, 2)).unwrap();
        assert_eq!(half.horizon(r(1, 4).as_big()), Some(2));
        assert_eq!(half.horizon(r(1, 1).as_big()), Some(0));
        assert_eq!(half.horizon(&BigRational::zero()), None);
        let slow = ExpDiscount::new(r(99, 100)).unwrap();
        assert_eq!(slow.horizon(r(1, 10).as_big()), Some(230));
    }

    #[test]
    fn rejects_bad_bases_and_literals() {
        assert!(ExpDiscount::new(r(1, 1)).is_err());
        assert!(ExpDiscount::new(r(0, 1)).is_err());
        assert!("3/2".parse::<Rat01>().is_err());
        assert!("1/0".parse::<Rat01>().is_err());
        assert!("-1/2".parse::<Rat01>().is_err());
        assert!("a/b".parse::<Rat01>().is_err());
        assert!(DiscountSeq::new(vec![]).is_err());
    }

    #[test]
    fn display_lowest_terms() {
        assert_eq!(r(2, 4).to_string(), "1/2");
        assert_eq!(r(3, 3).to_string(), "1");
        assert_eq!(r(0, 5).to_string(), "0");
        assert_eq!("6/8".parse::<Rat01>().unwrap(), r(3, 4));
        let x = r(6, 8);
        assert!(x.as_big().numer().gcd(x.as_big().denom()).is_one());
    }

    fn arb_rat() -> impl Strategy<Value = Rat01> {
        (0u64..=12, 1u64..=12).prop_map(|(p, q)| Rat01::frac(p.min(q), q))
    }

    fn arb_seq() -> impl Strategy<Value = DiscountSeq> {
        prop::collection::vec(arb_rat(), 1..5).prop_map(|v| DiscountSeq::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn act_parity_monotonicity(s in arb_seq(), a in arb_rat(), b in arb_rat()) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if s.is_odd() {
                prop_assert!(s.act(&lo) <= s.act(&hi));
            } else {
                prop_assert!(s.act(&lo) >= s.act(&hi));
            }
        }

        #[test]
        fn odot_compatible_with_act(s in arb_seq(), d in arb_rat(), v in arb_rat()) {
            prop_assert_eq!(s.odot(&d).act(&v), s.act(&d.mul(&v)));
        }

        #[test]
        fn append_one_negates(s in arb_seq(), v in arb_rat()) {
            prop_assert_eq!(s.append(Rat01::one()).act(&v), s.act(&v.complement()));
        }

        #[test]
        fn act_matches_alternating_sum(s in arb_seq(), v in arb_rat()) {
            // d1 - d1d2 + d1d2d3 - ... + (-1)^(n+1) d1...dn v
            let n = s.len();
            let mut prefix = BigRational::one();
            let mut sum = BigRational::zero();
            for (i, d) in s.entries().iter().enumerate() {
                prefix *= d.as_big();
                let term = if i + 1 == n { &prefix * v.as_big() } else { prefix.clone() };
                if i % 2 == 0 { sum += term } else { sum -= term }
            }
            prop_assert_eq!(s.act(&v).into_big(), sum);
        }

        #[test]
        fn act_stays_in_unit_interval(s in arb_seq(), v in arb_rat()) {
            let x = s.act(&v).into_big();
            prop_assert!(x >= BigRational::zero() && x <= BigRational::one());
        }

        #[test]
        fn literal_round_trip(v in arb_rat()) {
            prop_assert_eq!(v.to_string().parse::<Rat01>().unwrap(), v);
        }
    }
}
