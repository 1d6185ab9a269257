use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Which coefficient field a polynomial lives over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarMode {
    #[serde(rename = "rational")]
    Exact,
    #[serde(rename = "floating")]
    Float,
}

impl std::fmt::Display for ScalarMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarMode::Exact => write!(f, "rational"),
            ScalarMode::Float => write!(f, "floating"),
        }
    }
}

/// Coefficient field shared by the exact and floating pipelines.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const MODE: ScalarMode;

    fn from_i64(v: i64) -> Self;
    fn from_rational(q: &Rational) -> Self;
    /// Exact binary value in rational mode; identity in floating mode.
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Exact value in rational mode; exact binary expansion in floating mode
    /// (non-finite values map to zero).
    fn to_rational(&self) -> Rational;

    /// Zero test used by elimination. Exact mode ignores `tol`.
    fn is_small(&self, tol: f64) -> bool;

    /// Parses a literal coefficient: an integer, a decimal, or `p/q`.
    fn parse_literal(s: &str) -> Option<Self>;

    /// Text form of a non-negative coefficient as written by the polynomial writer.
    fn format_literal(&self) -> String;

    fn is_negative(&self) -> bool;

    fn from_ratio(n: i64, d: i64) -> Self {
        Self::from_rational(&Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }
}

impl Scalar for Rational {
    const MODE: ScalarMode = ScalarMode::Exact;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }

    fn from_f64(v: f64) -> Self {
        Rational::from_float(v).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_rational(&self) -> Rational {
        self.clone()
    }

    fn is_small(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn parse_literal(s: &str) -> Option<Self> {
        if let Some((n, d)) = s.split_once('/') {
            let n = parse_exact_decimal(n)?;
            let d = parse_exact_decimal(d)?;
            if d.is_zero() {
                return None;
            }
            return Some(n / d);
        }
        parse_exact_decimal(s)
    }

    fn format_literal(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn abs_f64(&self) -> f64 {
        ToPrimitive::to_f64(&self.abs()).unwrap_or(f64::INFINITY)
    }
}

impl Scalar for f64 {
    const MODE: ScalarMode = ScalarMode::Float;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_rational(q: &Rational) -> Self {
        Scalar::to_f64(q)
    }

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn to_rational(&self) -> Rational {
        Rational::from_float(*self).unwrap_or_else(|| Rational::from_integer(BigInt::from(0)))
    }

    fn is_small(&self, tol: f64) -> bool {
        self.abs() <= tol
    }

    fn parse_literal(s: &str) -> Option<Self> {
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.parse().ok()?;
            let d: f64 = d.parse().ok()?;
            return Some(n / d);
        }
        s.parse().ok()
    }

    fn format_literal(&self) -> String {
        format!("{}", self)
    }

    fn is_negative(&self) -> bool {
        *self < 0.0
    }
}

/// Exact value of a decimal literal such as `12`, `0.125` or `1.5e-3`.
fn parse_exact_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let shift = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let q = if shift >= 0 {
        Rational::from_integer(numer * num::pow(ten, shift as usize))
    } else {
        Rational::new(numer, num::pow(ten, (-shift) as usize))
    };
    Some(q)
}

/// Exact conversion of a finite float to a rational (binary expansion).
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    Rational::from_float(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_roundtrip() {
        let q = Rational::from_ratio(3, 8);
        assert_eq!(Scalar::to_f64(&q), 0.375);
        assert_eq!(<f64 as Scalar>::from_ratio(1, 4), 0.25);
        assert_eq!(rational_from_f64(0.5), Some(Rational::from_ratio(1, 2)));
        assert_eq!(Rational::parse_literal("1.5e-1"), Some(Rational::from_ratio(3, 20)));
        assert_eq!(Rational::parse_literal("6/4"), Some(Rational::from_ratio(3, 2)));
        assert_eq!(Rational::parse_literal("x"), None);
        assert_eq!(Rational::from_ratio(-3, 4).format_literal(), "-3/4");
    }
}
