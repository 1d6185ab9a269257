use num::{BigInt, Zero};

use super::polynomial::{FPoly, QPoly};
use super::scalar::Rational;

/// Result of snapping floating coefficients to nearby rationals.
#[derive(Debug, Clone)]
pub struct Rationalized {
    pub poly: QPoly,
    /// Largest `|c - q|` over all coefficients.
    pub max_perturbation: f64,
}

/// Nearest rational to `x` with denominator at most `max_denominator`
/// (continued fractions with a final semiconvergent step).
pub fn best_rational(x: f64, max_denominator: u64) -> Rational {
    assert!(max_denominator >= 1, "max_denominator must be at least 1");
    assert!(x.is_finite(), "cannot rationalize a non-finite value");
    let negative = x < 0.0;
    let mut y = x.abs();
    // convergents h/k
    let (mut h0, mut h1): (i128, i128) = (0, 1);
    let (mut k0, mut k1): (i128, i128) = (1, 0);
    let max = max_denominator as i128;
    let mut best = (y.round() as i128, 1i128);
    for _ in 0..64 {
        let a = y.floor();
        if a > 1e18 {
            break;
        }
        let a_i = a as i128;
        let h2 = a_i * h1 + h0;
        let k2 = a_i * k1 + k0;
        if k2 > max {
            // largest admissible semiconvergent
            let t = (max - k0) / k1.max(1);
            let semi = (t * h1 + h0, t * k1 + k0);
            let err = |p: (i128, i128)| (x.abs() - p.0 as f64 / p.1 as f64).abs();
            if k1 > 0 && err(semi) < err((h1, k1)) && semi.1 > 0 {
                best = semi;
            } else if k1 > 0 {
                best = (h1, k1);
            }
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        best = (h1, k1);
        let frac = y - a;
        if frac < 1e-15 {
            break;
        }
        y = 1.0 / frac;
    }
    let q = Rational::new(BigInt::from(best.0), BigInt::from(best.1));
    if negative {
        -q
    } else {
        q
    }
}

pub fn rationalize(p: &FPoly, max_denominator: u64) -> Rationalized {
    let mut poly = QPoly::zero(p.dim());
    let mut max_perturbation: f64 = 0.0;
    for (e, &c) in p.terms() {
        let q = best_rational(c, max_denominator);
        let err = (c - crate::poly::Scalar::to_f64(&q)).abs();
        max_perturbation = max_perturbation.max(err);
        if !q.is_zero() {
            poly.add_term(e.clone(), q);
        }
    }
    Rationalized { poly, max_perturbation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, Scalar};

    fn r(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn snaps_to_nearest_small_rational() {
        assert_eq!(best_rational(0.49999998, 10), r(1, 2));
        assert_eq!(best_rational(0.0, 10), r(0, 1));
        assert_eq!(best_rational(0.333333, 4), r(1, 3));
        assert_eq!(best_rational(-2.75, 8), r(-11, 4));
        assert_eq!(best_rational(std::f64::consts::PI, 7), r(22, 7));
        assert_eq!(best_rational(std::f64::consts::PI, 1000), r(355, 113));
        assert_eq!(best_rational(0.7, 1), r(1, 1));
    }

    #[test]
    fn reports_perturbation() {
        let p: FPoly = parse_poly("0.49999998*x1 + 0.25*x2", 2).unwrap();
        let out = rationalize(&p, 10);
        assert_eq!(out.poly, parse_poly("1/2*x1 + 1/4*x2", 2).unwrap());
        assert!((out.max_perturbation - 2e-8).abs() < 1e-12);
        let zero = rationalize(&parse_poly("0.01*x1", 2).unwrap(), 10);
        assert!(zero.poly.is_zero());
    }

    proptest::proptest! {
        #[test]
        fn best_rational_is_at_least_as_close_as_any_small_fraction(x in -10.0f64..10.0, dmax in 1u64..40) {
            let q = Scalar::to_f64(&best_rational(x, dmax));
            let err = (x - q).abs();
            for d in 1..=dmax {
                let n = (x * d as f64).round();
                proptest::prop_assert!(err <= (x - n / d as f64).abs() + 1e-12);
            }
        }
    }
}
