//! Normalized moments of the uniform measure on the unit sphere of R^N.
//!
//! For an all-even multi-index `a` with `|a| = 2k`:
//!
//! ```text
//! mean(x^a) = prod_i (a_i - 1)!! / (N (N + 2) ... (N + 2k - 2))
//! ```
//!
//! and zero as soon as one exponent is odd.

use std::collections::HashMap;
use std::sync::RwLock;

use num::{BigInt, One};

use super::exponent::ExponentVector;
use super::polynomial::Poly;
use super::scalar::{Rational, Scalar};

/// Lazily filled table of sphere moments for one ambient dimension.
///
/// Entries are a pure function of the multi-index, so concurrent fills are
/// idempotent and the table behaves as if computed eagerly.
#[derive(Debug)]
pub struct SphereMomentTable {
    dim: usize,
    cache: RwLock<HashMap<ExponentVector, (Rational, f64)>>,
}

impl SphereMomentTable {
    pub fn new(dim: usize) -> Self {
        SphereMomentTable { dim, cache: RwLock::new(HashMap::new()) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn moment(&self, e: &ExponentVector) -> Rational {
        self.entry(e).0
    }

    pub fn moment_f64(&self, e: &ExponentVector) -> f64 {
        self.entry(e).1
    }

    fn entry(&self, e: &ExponentVector) -> (Rational, f64) {
        assert_eq!(e.dim(), self.dim, "moment index dimension");
        if let Some(v) = self.cache.read().expect("moment cache poisoned").get(e) {
            return v.clone();
        }
        let q = sphere_moment(e);
        let v = (q.clone(), Scalar::to_f64(&q));
        self.cache.write().expect("moment cache poisoned").insert(e.clone(), v.clone());
        v
    }

    /// Mean of `p` over the sphere (total mass one).
    pub fn mean<S: Scalar>(&self, p: &Poly<S>) -> S {
        let mut total = S::zero();
        for (e, c) in p.terms() {
            if !e.is_all_even() {
                continue;
            }
            total = total + c.clone() * self.moment_as::<S>(e);
        }
        total
    }

    /// `mean(p * q)`, computed without forming the product.
    pub fn inner<S: Scalar>(&self, p: &Poly<S>, q: &Poly<S>) -> S {
        let mut total = S::zero();
        for (ea, ca) in p.terms() {
            for (eb, cb) in q.terms() {
                let e = ea.mul(eb);
                if e.is_all_even() {
                    total = total + ca.clone() * cb.clone() * self.moment_as::<S>(&e);
                }
            }
        }
        total
    }

    fn moment_as<S: Scalar>(&self, e: &ExponentVector) -> S {
        match S::MODE {
            super::ScalarMode::Exact => S::from_rational(&self.moment(e)),
            super::ScalarMode::Float => S::from_f64(self.moment_f64(e)),
        }
    }
}

/// Closed-form normalized moment of `x^e` on the unit sphere in R^dim.
pub fn sphere_moment(e: &ExponentVector) -> Rational {
    if !e.is_all_even() {
        return Rational::from_integer(BigInt::from(0));
    }
    let dim = e.dim() as i64;
    let mut numer = BigInt::one();
    for &a in e.as_slice() {
        let mut k = a as i64 - 1;
        while k > 1 {
            numer *= k;
            k -= 2;
        }
    }
    let half = e.degree() as i64 / 2;
    let mut denom = BigInt::one();
    for j in 0..half {
        denom *= dim + 2 * j;
    }
    Rational::new(numer, denom)
}

pub fn sphere_mean<S: Scalar>(p: &Poly<S>) -> S {
    SphereMomentTable::new(p.dim()).mean(p)
}

pub fn sphere_inner<S: Scalar>(p: &Poly<S>, q: &Poly<S>) -> S {
    SphereMomentTable::new(p.dim()).inner(p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, QPoly};

    fn r(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn circle_moments() {
        let p: QPoly = parse_poly("x1^2", 2).unwrap();
        assert_eq!(sphere_mean(&p), r(1, 2));
        let p: QPoly = parse_poly("x1^4", 2).unwrap();
        assert_eq!(sphere_mean(&p), r(3, 8));
        let p: QPoly = parse_poly("x1*x2", 2).unwrap();
        assert_eq!(sphere_mean(&p), r(0, 1));
    }

    #[test]
    fn constants_average_to_themselves() {
        let p: QPoly = parse_poly("7/3", 4).unwrap();
        assert_eq!(sphere_mean(&p), r(7, 3));
        // r^2 = 1 on the sphere
        assert_eq!(sphere_mean(&QPoly::radius_squared(5)), r(1, 1));
        assert_eq!(sphere_mean(&QPoly::radius_squared(3).pow(3)), r(1, 1));
    }

    #[test]
    fn moments_are_positive_for_even_indices() {
        for e in crate::poly::monomial_basis(3, 6) {
            let m = sphere_moment(&e);
            if e.is_all_even() {
                assert!(m > r(0, 1));
            } else {
                assert_eq!(m, r(0, 1));
            }
        }
    }

    #[test]
    fn table_matches_formula_and_float_mode() {
        let t = SphereMomentTable::new(3);
        let e = ExponentVector::new(vec![2, 2, 0]);
        assert_eq!(t.moment(&e), r(1, 15));
        assert_eq!(t.moment(&e), sphere_moment(&e));
        let p: QPoly = parse_poly("x1^2*x2^2 + x3^4", 3).unwrap();
        let exact = Scalar::to_f64(&t.mean(&p));
        assert!((t.mean(&p.to_float()) - exact).abs() < 1e-15);
        assert_eq!(t.inner(&p, &QPoly::one(3)), t.mean(&p));
    }
}
