//! Sparse multivariate polynomials over exact rationals or floats, with the
//! calculus operators and closed-form sphere moments the rest of the crate
//! computes in.

mod any;
mod compiled;
mod exponent;
mod moments;
mod polynomial;
pub mod random;
mod rationalize;
mod scalar;
mod text;

pub use any::Polynomial;
pub use compiled::{CompiledPoly, MonomialEvaluator};
pub use exponent::{binomial, monomial_basis, ExponentVector};
pub use moments::{sphere_inner, sphere_mean, sphere_moment, SphereMomentTable};
pub use polynomial::{FPoly, Poly, QPoly};
pub use rationalize::{best_rational, rationalize, Rationalized};
pub use scalar::{rational_from_f64, Rational, Scalar, ScalarMode};
pub use text::parse_poly;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scalar mode mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: ScalarMode, found: ScalarMode },
    #[error("polynomial parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
}

#[cfg(test)]
mod properties {
    use super::random::random_polynomial;
    use super::*;
    use crate::sphere::{sample_sphere_with, stream_rng};
    use proptest::prelude::*;

    fn qpoly(seed: u64, dim: usize, deg: u32) -> QPoly {
        random_polynomial(dim, deg, 3, &mut stream_rng(seed, 9))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ring_axioms_exact(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), dim in 1usize..4) {
            let (a, b, c) = (qpoly(s1, dim, 3), qpoly(s2, dim, 3), qpoly(s3, dim, 2));
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert!((&a - &a).is_zero());
        }

        #[test]
        fn eval_is_multiplicative(s1 in any::<u64>(), s2 in any::<u64>(), xs in proptest::collection::vec(-3i64..3, 3)) {
            let (a, b) = (qpoly(s1, 3, 3), qpoly(s2, 3, 3));
            let x: Vec<Rational> = xs.iter().map(|&v| Rational::from_ratio(v, 2)).collect();
            prop_assert_eq!((&a * &b).eval(&x).unwrap(), a.eval(&x).unwrap() * b.eval(&x).unwrap());
        }

        #[test]
        fn laplacian_product_rule(s1 in any::<u64>(), s2 in any::<u64>(), dim in 1usize..5) {
            let (p, q) = (qpoly(s1, dim, 4), qpoly(s2, dim, 3));
            let lhs = (&p * &q).laplacian();
            let two = Rational::from_i64(2);
            let rhs = &(&(&p * &q.laplacian()) + &(&q * &p.laplacian())) + &p.gradient_dot(&q).scale(&two);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn euler_identity_on_homogeneous(seed in any::<u64>(), dim in 1usize..5, m in 0u32..6) {
            let p: QPoly = random::random_homogeneous(dim, m, 4, &mut stream_rng(seed, 3));
            let mut radial = QPoly::zero(dim);
            for (i, g) in p.gradient().into_iter().enumerate() {
                radial = &radial + &(&g * &QPoly::var(dim, i));
            }
            prop_assert_eq!(&radial, &p.scale(&Rational::from_i64(m as i64)));
            prop_assert_eq!(radial, p.euler());
        }

        #[test]
        fn text_roundtrip(seed in any::<u64>(), dim in 1usize..5) {
            let p = qpoly(seed, dim, 4);
            let back: QPoly = parse_poly(&p.to_string(), dim).unwrap();
            prop_assert_eq!(back, p.clone());
            let f = p.to_float();
            let fback: FPoly = parse_poly(&f.to_string(), dim).unwrap();
            prop_assert_eq!(fback, f);
        }
    }

    #[test]
    fn sphere_mean_agrees_with_sampling() {
        let n = 40_000;
        for trial in 0..12u64 {
            let dim = 2 + (trial as usize % 4);
            let p = qpoly(1000 + trial, dim, 6);
            let exact = Scalar::to_f64(&sphere_mean(&p));
            let c = CompiledPoly::new(&p);
            let mut rng = stream_rng(trial, 1);
            let vals: Vec<f64> = (0..n).map(|_| c.eval(&sample_sphere_with(dim, &mut rng))).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            assert!((mean - exact).abs() <= 3.0 * se + 1e-12, "trial {trial}: mc {mean} exact {exact} se {se}");
        }
    }
}
