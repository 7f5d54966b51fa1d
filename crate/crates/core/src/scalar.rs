//! Numeric abstraction shared by the analytic formulas and the rate function.
//!
//! Everything that evaluates a closed-form expression is written once against
//! [`Scalar`] and instantiated either with exact big rationals (the default used
//! for reported values) or with machine floats (used by the simulator's hot
//! loop and for quick decimal printing).

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// A signed field supporting the handful of constructors the formulas need.
pub trait Scalar: Signed + Clone + PartialOrd + Debug + Display {
    fn from_i64(n: i64) -> Self;

    fn from_u128(n: u128) -> Self;

    fn to_f64(&self) -> f64;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    /// `2^{-k}` for `k <= 127`.
    fn half_pow(k: u32) -> Self {
        Self::one() / Self::from_u128(1u128 << k)
    }
}

impl Scalar for f64 {
    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn from_u128(n: u128) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_i64(n: i64) -> Self {
        n as f32
    }

    fn from_u128(n: u128) -> Self {
        n as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for BigRational {
    fn from_i64(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_u128(n: u128) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // numerator/denominator too large for a direct conversion
            let n = self.numer().to_f64().unwrap_or(f64::NAN);
            let d = self.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }
}

/// Exact binomial coefficient. Exact for every `n <= 64`.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Formats an exact rational as `num/den` (or `num` when integral).
pub fn format_fraction(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Decimal rendering with 15 significant digits, locale independent.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{:.14e}", x);
    // normalise through a parse so trailing zeros are trimmed
    let v: f64 = s.parse().unwrap_or(x);
    format!("{}", v)
}

/// Parses `a/b`, an integer, or a plain decimal such as `0.03125` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    let numer: BigInt = digits.parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let q = BigRational::new(numer, denom);
    Some(if negative { -q } else { q })
}
