use std::fmt;

use super::polynomial::{FPoly, Poly, QPoly};
use super::scalar::{Scalar, ScalarMode};
use super::text::parse_poly;
use super::PolyError;

/// A polynomial whose scalar mode is only known at run time (configs, reports).
///
/// Arithmetic between the two modes is rejected; conversion goes through
/// [`Polynomial::to_float`] explicitly.
#[derive(Debug, Clone, PartialEq)]
pub enum Polynomial {
    Exact(QPoly),
    Float(FPoly),
}

impl Polynomial {
    pub fn parse(text: &str, dim: usize, mode: ScalarMode) -> Result<Self, PolyError> {
        Ok(match mode {
            ScalarMode::Exact => Polynomial::Exact(parse_poly(text, dim)?),
            ScalarMode::Float => Polynomial::Float(parse_poly(text, dim)?),
        })
    }

    pub fn mode(&self) -> ScalarMode {
        match self {
            Polynomial::Exact(_) => ScalarMode::Exact,
            Polynomial::Float(_) => ScalarMode::Float,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Polynomial::Exact(p) => p.dim(),
            Polynomial::Float(p) => p.dim(),
        }
    }

    pub fn degree(&self) -> Option<u32> {
        match self {
            Polynomial::Exact(p) => p.degree(),
            Polynomial::Float(p) => p.degree(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match self {
            Polynomial::Exact(p) => p.is_homogeneous(),
            Polynomial::Float(p) => p.is_homogeneous(),
        }
    }

    pub fn to_float(&self) -> FPoly {
        match self {
            Polynomial::Exact(p) => p.to_float(),
            Polynomial::Float(p) => p.clone(),
        }
    }

    pub fn as_exact(&self) -> Result<&QPoly, PolyError> {
        match self {
            Polynomial::Exact(p) => Ok(p),
            Polynomial::Float(_) => {
                Err(PolyError::ModeMismatch { expected: ScalarMode::Exact, found: ScalarMode::Float })
            }
        }
    }

    pub fn as_float(&self) -> Result<&FPoly, PolyError> {
        match self {
            Polynomial::Float(p) => Ok(p),
            Polynomial::Exact(_) => {
                Err(PolyError::ModeMismatch { expected: ScalarMode::Float, found: ScalarMode::Exact })
            }
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> Result<f64, PolyError> {
        match self {
            Polynomial::Exact(p) => p.eval_f64(x),
            Polynomial::Float(p) => p.eval_f64(x),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        match (self, other) {
            (Polynomial::Exact(a), Polynomial::Exact(b)) => Ok(Polynomial::Exact(a.try_add(b)?)),
            (Polynomial::Float(a), Polynomial::Float(b)) => Ok(Polynomial::Float(a.try_add(b)?)),
            _ => Err(PolyError::ModeMismatch { expected: self.mode(), found: other.mode() }),
        }
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        match (self, other) {
            (Polynomial::Exact(a), Polynomial::Exact(b)) => Ok(Polynomial::Exact(a.try_mul(b)?)),
            (Polynomial::Float(a), Polynomial::Float(b)) => Ok(Polynomial::Float(a.try_mul(b)?)),
            _ => Err(PolyError::ModeMismatch { expected: self.mode(), found: other.mode() }),
        }
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polynomial::Exact(p) => p.fmt(f),
            Polynomial::Float(p) => p.fmt(f),
        }
    }
}

impl From<QPoly> for Polynomial {
    fn from(p: QPoly) -> Self {
        Polynomial::Exact(p)
    }
}

impl From<FPoly> for Polynomial {
    fn from(p: FPoly) -> Self {
        Polynomial::Float(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_modes_are_rejected() {
        let a = Polynomial::parse("x1 + x2", 2, ScalarMode::Exact).unwrap();
        let b = Polynomial::parse("x1 + x2", 2, ScalarMode::Float).unwrap();
        assert!(matches!(a.try_add(&b), Err(PolyError::ModeMismatch { .. })));
        assert!(matches!(b.try_mul(&a), Err(PolyError::ModeMismatch { .. })));
        assert!(a.try_mul(&a).is_ok());
        assert_eq!(Polynomial::Float(a.to_float()), b);
    }
}

impl serde::Serialize for Polynomial {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.collect_str(self)
    }
}

impl<S: Scalar> serde::Serialize for Poly<S> {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.collect_str(self)
    }
}
