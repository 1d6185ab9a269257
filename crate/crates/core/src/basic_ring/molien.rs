//! Hilbert series of the invariant ring of a finite group, by Molien's formula.

use num::{One, ToPrimitive, Zero};

use super::BasicRingError;
use crate::models::{FoliationModel, Matrix};
use crate::poly::Rational;

/// Coefficients `a_k` of `det(I - t A) = sum_k a_k t^k` (Faddeev-LeVerrier).
pub fn det_one_minus_t(a: &Matrix<Rational>) -> Vec<Rational> {
    let n = a.dim();
    let mut coeffs = vec![Rational::one()];
    let mut m = Matrix::<Rational>::from_rows(vec![vec![Rational::zero(); n]; n]).expect("square");
    for k in 1..=n {
        let mut next = a.mul(&m).rows();
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += coeffs[k - 1].clone();
        }
        m = Matrix::from_rows(next).expect("square");
        let am = a.mul(&m);
        let trace: Rational = (0..n).map(|i| am.get(i, i).clone()).sum();
        coeffs.push(-trace / Rational::from_integer((k as i64).into()));
    }
    coeffs
}

/// First `len` coefficients of `1 / p(t)` with `p(0) = 1`.
fn series_inverse(p: &[Rational], len: usize) -> Vec<Rational> {
    let mut b: Vec<Rational> = Vec::with_capacity(len);
    for k in 0..len {
        if k == 0 {
            b.push(Rational::one());
            continue;
        }
        let s: Rational = (1..=k.min(p.len() - 1)).map(|j| &p[j] * &b[k - j]).sum();
        b.push(-s);
    }
    b
}

/// `dim B_d` for `d = 0..=max_degree`, from the averaged Molien series
/// `(1/|G|) sum_g 1/det(I - t g)`. Requires a rational-mode group model.
pub fn molien_dimensions(model: &FoliationModel, max_degree: u32) -> Result<Vec<usize>, BasicRingError> {
    let FoliationModel::FiniteGroup(g) = model else {
        return Err(BasicRingError::RequiresRationalGroup);
    };
    let len = max_degree as usize + 1;
    let mut total = vec![Rational::zero(); len];
    for e in g.rational_elements() {
        for (t, c) in total.iter_mut().zip(series_inverse(&det_one_minus_t(e), len)) {
            *t += c;
        }
    }
    let order = Rational::from_integer((g.order() as i64).into());
    total
        .into_iter()
        .map(|c| {
            let v = c / order.clone();
            if v.is_integer() {
                v.to_integer().to_usize().ok_or(BasicRingError::RequiresRationalGroup)
            } else {
                Err(BasicRingError::InvalidModel(format!("Molien coefficient {v} is not an integer")))
            }
        })
        .collect()
}
