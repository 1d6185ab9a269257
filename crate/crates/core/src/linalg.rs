//! Dense linear algebra over `Scalar` rows (exact elimination) and `f64`
//! matrices (SVD-based rank decisions and least squares).

use nalgebra::{DMatrix, DVector};

use crate::poly::{ExponentVector, Scalar, SphereMomentTable};

/// Reduced row echelon form. Entries with `|a| <= tol * scale` count as zero
/// in floating mode (`scale` is the largest input magnitude); exact mode
/// ignores `tol`. Returns the nonzero rows and their pivot columns.
pub fn rref<S: Scalar>(rows: &[Vec<S>], tol: f64) -> (Vec<Vec<S>>, Vec<usize>) {
    let mut m: Vec<Vec<S>> = rows.to_vec();
    let ncols = m.first().map(|r| r.len()).unwrap_or(0);
    let scale = m.iter().flatten().map(|a| a.abs_f64()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let thresh = tol * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == m.len() {
            break;
        }
        let best = (r..m.len())
            .filter(|&i| !m[i][col].is_small(thresh))
            .max_by(|&a, &b| m[a][col].abs_f64().total_cmp(&m[b][col].abs_f64()));
        let Some(p) = best else { continue };
        m.swap(r, p);
        let inv = S::one() / m[r][col].clone();
        for a in m[r].iter_mut() {
            *a = a.clone() * inv.clone();
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let factor = m[i][col].clone();
                for j in 0..ncols {
                    let v = m[r][j].clone() * factor.clone();
                    m[i][j] = m[i][j].clone() - v;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    m.truncate(r);
    if S::MODE == crate::poly::ScalarMode::Float {
        for row in m.iter_mut() {
            for a in row.iter_mut() {
                if a.is_small(thresh) {
                    *a = S::zero();
                }
            }
        }
    }
    (m, pivots)
}

pub fn rank<S: Scalar>(rows: &[Vec<S>], tol: f64) -> usize {
    rref(rows, tol).0.len()
}

/// Incrementally built echelon basis used for span-membership tests.
#[derive(Debug, Clone)]
pub struct SpanBuilder<S> {
    rows: Vec<(usize, Vec<S>)>,
    tol: f64,
}

impl<S: Scalar> SpanBuilder<S> {
    pub fn new(tol: f64) -> Self {
        SpanBuilder { rows: Vec::new(), tol }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn reduce(&self, v: &[S]) -> Vec<S> {
        let mut v = v.to_vec();
        for (p, row) in &self.rows {
            if !v[*p].is_zero() {
                let f = v[*p].clone();
                for (a, b) in v.iter_mut().zip(row) {
                    *a = a.clone() - f.clone() * b.clone();
                }
            }
        }
        v
    }

    /// Adds `v` if it is independent of the current rows; reports whether it was.
    pub fn insert(&mut self, v: &[S]) -> bool {
        let scale = v.iter().map(|a| a.abs_f64()).fold(0.0, f64::max);
        let red = self.reduce(v);
        let thresh = self.tol * scale.max(f64::MIN_POSITIVE);
        let pivot = (0..red.len())
            .filter(|&j| !red[j].is_small(thresh))
            .max_by(|&a, &b| red[a].abs_f64().total_cmp(&red[b].abs_f64()));
        let Some(p) = pivot else { return false };
        let inv = S::one() / red[p].clone();
        let row: Vec<S> = red.into_iter().map(|a| a * inv.clone()).collect();
        for (_, other) in self.rows.iter_mut() {
            if !other[p].is_zero() {
                let f = other[p].clone();
                for (a, b) in other.iter_mut().zip(&row) {
                    *a = a.clone() - f.clone() * b.clone();
                }
            }
        }
        self.rows.push((p, row));
        true
    }

    pub fn contains(&self, v: &[S]) -> bool {
        let scale = v.iter().map(|a| a.abs_f64()).fold(0.0, f64::max);
        let thresh = self.tol * scale.max(f64::MIN_POSITIVE);
        self.reduce(v).iter().all(|a| a.is_small(thresh))
    }
}

/// Gram matrix of the sphere inner product on a list of monomials.
pub fn sphere_gram(basis: &[ExponentVector], table: &SphereMomentTable) -> DMatrix<f64> {
    let n = basis.len();
    DMatrix::from_fn(n, n, |i, j| table.moment_f64(&basis[i].mul(&basis[j])))
}

/// Upper factor `U` with `G = U^T U`, so that `c^T G c = |U c|^2`.
pub fn gram_factor(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let chol = gram.clone().cholesky().expect("sphere Gram matrix is positive definite");
    chol.l().transpose()
}

/// Singular values (descending) and right singular vectors as rows.
pub fn svd_rows(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (Vec::new(), DMatrix::zeros(0, m.ncols()));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let rows = DMatrix::from_fn(order.len(), m.ncols(), |i, j| v_t[(order[i], j)]);
    (sv, rows)
}

/// Rank decision from descending singular values with relative tolerance.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RankDecision {
    pub rank: usize,
    pub tolerance: f64,
    /// Relative singular values `s_i / s_max`.
    pub relative_singular_values: Vec<f64>,
    /// `s_rank / s_(rank+1)`; infinite when nothing was dropped or kept.
    pub gap: Option<f64>,
    /// Some relative singular value lies within a factor `unstable_band` of the tolerance.
    pub unstable: bool,
}

pub fn decide_rank(singular_values: &[f64], tol: f64, unstable_band: f64) -> RankDecision {
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let rel: Vec<f64> = if smax > 0.0 {
        singular_values.iter().map(|s| s / smax).collect()
    } else {
        vec![0.0; singular_values.len()]
    };
    let absolute_floor = 1e-12;
    let rank = if smax <= absolute_floor { 0 } else { rel.iter().filter(|&&r| r > tol).count() };
    let gap = if rank > 0 && rank < rel.len() {
        Some(rel[rank - 1] / rel[rank].max(f64::MIN_POSITIVE))
    } else {
        None
    };
    let unstable = smax > absolute_floor && rel.iter().any(|&r| r > tol / unstable_band && r < tol * unstable_band);
    RankDecision { rank, tolerance: tol, relative_singular_values: rel, gap, unstable }
}

/// Least-squares solution with column scaling and SVD.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// 2-norm condition number of the column-scaled design matrix.
    pub condition: f64,
    /// Root mean square of the residual vector.
    pub residual_rms: f64,
    /// `(A^T A)^{-1}` in unscaled coordinates, for error propagation.
    pub normal_inverse: DMatrix<f64>,
}

pub fn least_squares(a: &DMatrix<f64>, b: &[f64]) -> LeastSquares {
    let ncols = a.ncols();
    let scales: Vec<f64> = (0..ncols)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for j in 0..ncols {
        scaled.column_mut(j).scale_mut(1.0 / scales[j]);
    }
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let rhs = DVector::from_column_slice(b);
    let y = svd.solve(&rhs, smax * 1e-14).expect("svd solve");
    let coefficients: Vec<f64> = (0..ncols).map(|j| y[j] / scales[j]).collect();
    let fitted = a * DVector::from_column_slice(&coefficients);
    let residual_rms = ((&fitted - &rhs).norm_squared() / b.len().max(1) as f64).sqrt();
    let ata = a.transpose() * a;
    let normal_inverse = ata.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::zeros(ncols, ncols));
    LeastSquares { coefficients, condition, residual_rms, normal_inverse }
}

/// Pseudo-inverse `P` of `a` (so that `P b` is the least-squares solution)
/// computed through column scaling, plus the 2-norm condition number of the
/// scaled matrix.
pub fn scaled_pseudo_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let ncols = a.ncols();
    if a.nrows() == 0 || ncols == 0 {
        return (DMatrix::zeros(ncols, a.nrows()), 1.0);
    }
    let scales: Vec<f64> = (0..ncols).map(|j| Some(a.column(j).norm()).filter(|n| *n > 0.0).unwrap_or(1.0)).collect();
    let mut scaled = a.clone();
    for j in 0..ncols {
        scaled.column_mut(j).scale_mut(1.0 / scales[j]);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = if a.nrows() >= ncols { svd.singular_values.min() } else { 0.0 };
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut pinv = svd.pseudo_inverse(smax * 1e-14).expect("pseudo-inverse of a scaled matrix");
    for j in 0..ncols {
        pinv.row_mut(j).scale_mut(1.0 / scales[j]);
    }
    (pinv, condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Rational;

    #[test]
    fn scaled_pinv_solves_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 100.0, 1.0, 200.0, 1.0, 300.0]);
        let (p, cond) = scaled_pseudo_inverse(&a);
        let c = &p * DVector::from_column_slice(&[3.0, 5.0, 7.0]);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 0.02).abs() < 1e-14);
        assert!(cond.is_finite() && cond > 1.0);
    }

    fn q(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| Rational::from_i64(x)).collect()
    }

    #[test]
    fn exact_rref() {
        let rows = vec![q(&[2, 4, 0]), q(&[1, 2, 1]), q(&[3, 6, 1])];
        let (r, p) = rref(&rows, 0.0);
        assert_eq!(p, vec![0, 2]);
        assert_eq!(r, vec![q(&[1, 2, 0]), q(&[0, 0, 1])]);
    }

    #[test]
    fn span_builder_membership() {
        let mut s = SpanBuilder::<Rational>::new(0.0);
        assert!(s.insert(&q(&[1, 1, 0])));
        assert!(s.insert(&q(&[0, 1, 1])));
        assert!(!s.insert(&q(&[1, 2, 1])));
        assert!(s.contains(&q(&[2, 1, -1])));
        assert!(!s.contains(&q(&[0, 0, 1])));
        let mut f = SpanBuilder::<f64>::new(1e-9);
        assert!(f.insert(&[1.0, 1.0]));
        assert!(!f.insert(&[2.0, 2.0 + 1e-12]));
    }

    #[test]
    fn rank_decision_reports_gap() {
        let d = decide_rank(&[2.0, 1.0, 1e-12], 1e-8, 10.0);
        assert_eq!(d.rank, 2);
        assert!((d.gap.unwrap() - 0.5 / 5e-13).abs() / (1e12) < 1.0);
        assert!(!d.unstable);
        let d = decide_rank(&[1.0, 2e-8], 1e-8, 10.0);
        assert!(d.unstable);
        assert_eq!(decide_rank(&[1.0, 0.5], 1e2, 10.0).rank, 0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let a = DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let b: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let ls = least_squares(&a, &b);
        assert!((ls.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((ls.coefficients[1] + 0.5).abs() < 1e-12);
        assert!(ls.residual_rms < 1e-12);
        assert!(ls.condition >= 1.0);
    }
}
