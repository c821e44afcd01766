//! Arithmetic backends: exact rationals and `f64`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse `{0}` as a number")]
pub struct ParseScalarError(pub String);

/// Which backend a computation ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arithmetic {
    ExactRational,
    Float,
}

/// Field operations shared by the two backends.
///
/// Exact backends compare against zero exactly; the float backend compares
/// against the tolerance passed by the caller.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    const ARITHMETIC: Arithmetic;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Parses `p/q`, integers and decimals (with optional exponent).
    fn parse(text: &str) -> Result<Self, ParseScalarError>;
    /// Renders `p/q` (exact) or the shortest round-tripping decimal (float).
    fn render(&self) -> String;
    /// Nearest representable value of an `f64`.
    fn from_f64(x: f64) -> Self;

    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn is_exact() -> bool {
        Self::ARITHMETIC == Arithmetic::ExactRational
    }

    /// `true` when the value is zero (exact) or within `tol` of zero (float).
    fn near_zero(&self, tol: f64) -> bool {
        if Self::is_exact() {
            *self == Self::zero()
        } else {
            self.to_f64().abs() < tol
        }
    }

    /// Strictly positive beyond the tolerance.
    fn positive(&self, tol: f64) -> bool {
        *self > Self::zero() && !self.near_zero(tol)
    }
}

impl Scalar for f64 {
    const ARITHMETIC: Arithmetic = Arithmetic::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn parse(text: &str) -> Result<Self, ParseScalarError> {
        let t = text.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p: f64 = p.trim().parse().map_err(|_| ParseScalarError(text.into()))?;
            let q: f64 = q.trim().parse().map_err(|_| ParseScalarError(text.into()))?;
            if q == 0.0 {
                return Err(ParseScalarError(text.into()));
            }
            return Ok(p / q);
        }
        let v: f64 = t.parse().map_err(|_| ParseScalarError(text.into()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ParseScalarError(text.into()))
        }
    }
    fn render(&self) -> String {
        format!("{self}")
    }
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl Scalar for BigRational {
    const ARITHMETIC: Arithmetic = Arithmetic::ExactRational;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn parse(text: &str) -> Result<Self, ParseScalarError> {
        parse_exact(text.trim()).ok_or_else(|| ParseScalarError(text.into()))
    }
    fn render(&self) -> String {
        if self.denom().is_one() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(Zero::zero)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

fn parse_exact(t: &str) -> Option<BigRational> {
    if let Some((p, q)) = t.split_once('/') {
        let p = parse_exact(p.trim())?;
        let q = parse_exact(q.trim())?;
        if q.is_zero() {
            return None;
        }
        return Some(p / q);
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if all.is_empty() { "0" } else { &all }).ok()?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

pub fn sum<S: Scalar>(values: &[S]) -> S {
    values.iter().cloned().fold(S::zero(), |acc, v| acc + v)
}
