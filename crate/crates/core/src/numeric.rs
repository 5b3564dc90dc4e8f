//! Exact rational arithmetic and the ordered value domains.
//!
//! Every probability, weight and reward in the crate is a [`Rational`], so
//! belief states compare by plain structural equality. Values of the
//! semantics live in [`ExtValue`], which covers both the Boolean domain and
//! the extended non-negative reals `[0, ∞]`.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedMul, CheckedSub, One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithmeticError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("not an exact rational literal: {0:?}")]
    BadLiteral(String),
    #[error("rational literal out of range: {0:?}")]
    OutOfRange(String),
    #[error("not a value literal: {0:?}")]
    BadValue(String),
    #[error("rational arithmetic overflowed 128-bit integers")]
    Overflow,
}

/// Panic payload raised by the arithmetic operators on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow;

fn overflow() -> ! {
    std::panic::panic_any(Overflow)
}

/// Runs `f`, turning an arithmetic overflow inside it into an error. Other
/// panics propagate.
pub fn catch_overflow<T>(f: impl FnOnce() -> T) -> Result<T, ArithmeticError> {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).map_err(|payload| {
        if payload.is::<Overflow>() {
            ArithmeticError::Overflow
        } else {
            std::panic::resume_unwind(payload)
        }
    })
}

/// Installs a panic hook that stays silent for [`Overflow`] payloads, which
/// [`catch_overflow`] reports as errors, and defers to the previous hook for
/// everything else.
pub fn silence_overflow_panics() {
    let previous = std::panic::take_hook();
    std::panic::set_hook(Box::new(move |info| {
        if !info.payload().is::<Overflow>() {
            previous(info);
        }
    }));
}

/// An exact rational number, always kept in lowest terms with a positive
/// denominator.
///
/// Arithmetic operators panic with an [`Overflow`] payload when a numerator or
/// denominator leaves `i128`; see [`catch_overflow`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rational(Ratio<i128>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    pub fn new(numer: i128, denom: i128) -> Result<Self, ArithmeticError> {
        if denom == 0 {
            return Err(ArithmeticError::DivisionByZero);
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn from_integer(n: i128) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn checked_div(self, rhs: Rational) -> Result<Rational, ArithmeticError> {
        if rhs.is_zero() {
            return Err(ArithmeticError::DivisionByZero);
        }
        // a/b / c/d = (a·d) / (b·c), reduced by Ratio::new
        let n = self
            .numer()
            .checked_mul(rhs.denom())
            .unwrap_or_else(|| overflow());
        let d = self
            .denom()
            .checked_mul(rhs.numer())
            .unwrap_or_else(|| overflow());
        Ok(Rational(Ratio::new(n, d)))
    }

    pub fn recip(self) -> Result<Rational, ArithmeticError> {
        Rational::ONE.checked_div(self)
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::ZERO
    }
}

impl From<i128> for Rational {
    fn from(n: i128) -> Self {
        Rational::from_integer(n)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_add(&rhs.0).unwrap_or_else(|| overflow()))
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = *self + rhs;
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_sub(&rhs.0).unwrap_or_else(|| overflow()))
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0.checked_mul(&rhs.0).unwrap_or_else(|| overflow()))
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, x| acc + *x)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn parse_int(s: &str, whole: &str) -> Result<i128, ArithmeticError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ArithmeticError::BadLiteral(whole.to_string()));
    }
    s.parse::<i128>()
        .map_err(|_| ArithmeticError::OutOfRange(whole.to_string()))
}

/// Accepts `p/q`, `p`, and finite decimals such as `0.25` or `-1.5`.
impl FromStr for Rational {
    type Err = ArithmeticError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let s = text.trim();
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let magnitude = if let Some((n, d)) = body.split_once('/') {
            let n = parse_int(n.trim(), text)?;
            let d = parse_int(d.trim(), text)?;
            Rational::new(n, d)?
        } else if let Some((int_part, frac_part)) = body.split_once('.') {
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(ArithmeticError::BadLiteral(text.to_string()));
            }
            let int = if int_part.is_empty() {
                0
            } else {
                parse_int(int_part, text)?
            };
            let frac = if frac_part.is_empty() {
                0
            } else {
                parse_int(frac_part, text)?
            };
            let scale = u32::try_from(frac_part.len())
                .ok()
                .and_then(|e| 10i128.checked_pow(e))
                .ok_or_else(|| ArithmeticError::OutOfRange(text.to_string()))?;
            let numer = int
                .checked_mul(scale)
                .and_then(|x| x.checked_add(frac))
                .ok_or_else(|| ArithmeticError::OutOfRange(text.to_string()))?;
            Rational::new(numer, scale)?
        } else {
            Rational::from_integer(parse_int(body, text)?)
        };
        Ok(if negative { -magnitude } else { magnitude })
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // Accept both "p/q" strings and bare JSON numbers.
        let value = serde_json::Value::deserialize(deserializer)?;
        let text = match &value {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(serde::de::Error::custom(format!(
                    "expected a rational literal, found {other}"
                )))
            }
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Which ordered object a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// `{f < t}`
    Bool,
    /// `[0, ∞]`
    Reward,
}

/// An element of one of the two value domains.
///
/// Mixing domains in a join or meet is a programming error and panics.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtValue {
    Bool(bool),
    Finite(Rational),
    Infinity,
}

impl ExtValue {
    pub const FALSE: ExtValue = ExtValue::Bool(false);
    pub const TRUE: ExtValue = ExtValue::Bool(true);
    pub const ZERO: ExtValue = ExtValue::Finite(Rational::ZERO);

    pub fn bottom(domain: Domain) -> ExtValue {
        match domain {
            Domain::Bool => ExtValue::FALSE,
            Domain::Reward => ExtValue::ZERO,
        }
    }

    pub fn top(domain: Domain) -> ExtValue {
        match domain {
            Domain::Bool => ExtValue::TRUE,
            Domain::Reward => ExtValue::Infinity,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            ExtValue::Bool(_) => Domain::Bool,
            _ => Domain::Reward,
        }
    }

    pub fn is_bottom(&self) -> bool {
        *self == ExtValue::bottom(self.domain())
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            ExtValue::Finite(r) => Some(*r),
            _ => None,
        }
    }

    pub fn join(self, other: ExtValue) -> ExtValue {
        assert_eq!(
            self.domain(),
            other.domain(),
            "join of values from different domains: {self} and {other}"
        );
        self.max(other)
    }

    pub fn meet(self, other: ExtValue) -> ExtValue {
        assert_eq!(
            self.domain(),
            other.domain(),
            "meet of values from different domains: {self} and {other}"
        );
        self.min(other)
    }

    /// Addition on `[0, ∞]`.
    pub fn plus(self, other: ExtValue) -> ExtValue {
        match (self, other) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => ExtValue::Finite(a + b),
            (ExtValue::Infinity, ExtValue::Finite(_) | ExtValue::Infinity)
            | (ExtValue::Finite(_), ExtValue::Infinity) => ExtValue::Infinity,
            _ => panic!("addition is only defined on [0, ∞]: {self} + {other}"),
        }
    }

    /// Scalar multiplication on `[0, ∞]` with the convention `0 · ∞ = 0`.
    pub fn scale(self, weight: Rational) -> ExtValue {
        match self {
            ExtValue::Finite(r) => ExtValue::Finite(r * weight),
            ExtValue::Infinity if weight.is_zero() => ExtValue::ZERO,
            ExtValue::Infinity => ExtValue::Infinity,
            ExtValue::Bool(_) => panic!("scaling is only defined on [0, ∞]"),
        }
    }
}

/// Within a domain this is the usual order. Across domains the order is
/// arbitrary (Booleans first) and exists only so values can be map keys;
/// [`ExtValue::join`] and [`ExtValue::meet`] refuse mixed domains.
impl Ord for ExtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtValue::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a.cmp(b),
            (Bool(_), _) => Ordering::Less,
            (_, Bool(_)) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
            (Finite(_), Infinity) => Ordering::Less,
            (Infinity, Finite(_)) => Ordering::Greater,
            (Infinity, Infinity) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Least upper bound of `values`; the empty join is the bottom of `domain`.
pub fn ext_join<I: IntoIterator<Item = ExtValue>>(domain: Domain, values: I) -> ExtValue {
    values
        .into_iter()
        .fold(ExtValue::bottom(domain), ExtValue::join)
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::Bool(true) => f.write_str("t"),
            ExtValue::Bool(false) => f.write_str("f"),
            ExtValue::Finite(r) => write!(f, "{r}"),
            ExtValue::Infinity => f.write_str("inf"),
        }
    }
}

impl fmt::Debug for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExtValue {
    type Err = ArithmeticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "t" | "true" => Ok(ExtValue::TRUE),
            "f" | "false" => Ok(ExtValue::FALSE),
            "inf" | "∞" => Ok(ExtValue::Infinity),
            other => {
                let r: Rational = other.parse()?;
                if r.is_negative() {
                    return Err(ArithmeticError::BadValue(s.to_string()));
                }
                Ok(ExtValue::Finite(r))
            }
        }
    }
}

impl Serialize for ExtValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
