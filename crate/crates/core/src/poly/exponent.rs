use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Exponents of a monomial `x1^a1 * ... * xN^aN`, one entry per ambient coordinate.
///
/// Ordered graded-lexicographically: total degree first, then larger exponent
/// on the earlier variable wins (`x1^2 > x1*x2 > x2^2 > x1 > x2 > 1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExponentVector(Vec<u16>);

impl ExponentVector {
    pub fn new(exponents: Vec<u16>) -> Self {
        ExponentVector(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        ExponentVector(vec![0; dim])
    }

    pub fn unit(dim: usize, var: usize) -> Self {
        let mut e = vec![0; dim];
        e[var] = 1;
        ExponentVector(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&a| a as u32).sum()
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u16 {
        self.0[i]
    }

    pub fn is_all_even(&self) -> bool {
        self.0.iter().all(|a| a % 2 == 0)
    }

    pub fn mul(&self, other: &ExponentVector) -> ExponentVector {
        debug_assert_eq!(self.dim(), other.dim());
        ExponentVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Exponent vector with `var` lowered by one, or `None` if it is already zero.
    pub fn lowered(&self, var: usize) -> Option<ExponentVector> {
        if self.0[var] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[var] -= 1;
        Some(ExponentVector(e))
    }

    pub fn raised(&self, var: usize) -> ExponentVector {
        let mut e = self.0.clone();
        e[var] += 1;
        ExponentVector(e)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .filter(|(a, _)| **a > 0)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }
}

impl Ord for ExponentVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for ExponentVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponent vectors of total degree `degree` in `dim` variables, in
/// descending graded-lex order (`[x^2, xy, y^2]` for `dim = 2, degree = 2`).
pub fn monomial_basis(dim: usize, degree: u32) -> Vec<ExponentVector> {
    let mut out = Vec::new();
    if dim == 0 {
        if degree == 0 {
            out.push(ExponentVector(Vec::new()));
        }
        return out;
    }
    let mut current = vec![0u16; dim];
    fill(&mut current, 0, degree, &mut out);
    out
}

fn fill(current: &mut [u16], pos: usize, remaining: u32, out: &mut Vec<ExponentVector>) {
    if pos == current.len() - 1 {
        current[pos] = remaining as u16;
        out.push(ExponentVector(current.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a as u16;
        fill(current, pos + 1, remaining - a, out);
    }
    current[pos] = 0;
}

/// Binomial coefficient `C(n, k)` as `u64`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_in_two_variables() {
        let b = monomial_basis(2, 2);
        let got: Vec<_> = b.iter().map(|e| e.as_slice().to_vec()).collect();
        assert_eq!(got, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn basis_counts() {
        assert_eq!(monomial_basis(4, 2).len(), 10);
        assert_eq!(monomial_basis(1, 5).len(), 1);
        assert_eq!(monomial_basis(1, 5)[0].as_slice(), &[5]);
        for dim in 1..6usize {
            for d in 0..7u32 {
                assert_eq!(
                    monomial_basis(dim, d).len() as u64,
                    binomial((dim as u64) + d as u64 - 1, d as u64)
                );
            }
        }
    }

    #[test]
    fn basis_is_descending_grlex() {
        let b = monomial_basis(3, 3);
        for w in b.windows(2) {
            assert!(w[0] > w[1]);
        }
        let x1 = ExponentVector::new(vec![1, 0]);
        let x2sq = ExponentVector::new(vec![0, 2]);
        assert!(x2sq > x1);
    }
}
