//! Numeric abstraction for the performance model.
//!
//! Model arithmetic is written once against [`Scalar`] and instantiated for
//! `f32`, `f64` and exact [`BigRational`]. Fitting needs transcendental
//! operations and is bounded on [`num_traits::Float`] instead.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive};

pub trait Scalar: Num + Clone + PartialOrd + Debug {
    fn from_u64(n: u64) -> Self;

    /// Parses a plain decimal literal such as `7.29e-5` or `-12.5`.
    /// Rational instances parse it exactly.
    fn from_decimal(s: &str) -> Option<Self>;

    fn as_f64(&self) -> f64;

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_decimal(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_u64(n: u64) -> Self {
        n as f32
    }
    fn from_decimal(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
    fn as_f64(&self) -> f64 {
        *self as f64
    }
}

impl Scalar for BigRational {
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_decimal(s: &str) -> Option<Self> {
        let s = s.trim();
        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
            None => (s, 0),
        };
        let (negative, mantissa) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let mut value = BigRational::from_integer(digits.parse::<BigInt>().ok()?);
        let shift = exponent - frac_part.len() as i32;
        let ten = BigRational::from_integer(BigInt::from(10));
        let scale = num_traits::pow(ten, shift.unsigned_abs() as usize);
        if shift >= 0 {
            value *= scale;
        } else {
            value /= scale;
        }
        Some(if negative { -value } else { value })
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact `2^exp` as a rational.
pub fn pow2(exp: u32) -> BigRational {
    BigRational::from_integer(BigInt::one() << exp as usize)
}
