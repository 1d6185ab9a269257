//! Random test polynomials with small rational coefficients.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::exponent::monomial_basis;
use super::polynomial::Poly;
use super::scalar::Scalar;

/// Homogeneous polynomial of degree `degree` with up to `max_terms` terms and
/// coefficients `n/d`, `|n| <= 5`, `d in 1..=4`. May be zero only if every
/// drawn coefficient cancels, which cannot happen since terms are distinct.
pub fn random_homogeneous<S: Scalar, R: Rng + ?Sized>(
    dim: usize,
    degree: u32,
    max_terms: usize,
    rng: &mut R,
) -> Poly<S> {
    let basis = monomial_basis(dim, degree);
    let count = rng.random_range(1..=max_terms.min(basis.len()).max(1));
    let mut p = Poly::zero(dim);
    for e in basis.choose_multiple(rng, count) {
        let mut n = 0;
        while n == 0 {
            n = rng.random_range(-5i64..=5);
        }
        let d = rng.random_range(1i64..=4);
        p.add_term(e.clone(), S::from_ratio(n, d));
    }
    p
}

/// Sum of random homogeneous pieces in every degree `0..=max_degree`.
pub fn random_polynomial<S: Scalar, R: Rng + ?Sized>(
    dim: usize,
    max_degree: u32,
    terms_per_degree: usize,
    rng: &mut R,
) -> Poly<S> {
    let mut p = Poly::zero(dim);
    for d in 0..=max_degree {
        if rng.random_bool(0.7) || d == max_degree {
            p = &p + &random_homogeneous(dim, d, terms_per_degree, rng);
        }
    }
    p
}
