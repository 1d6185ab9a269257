//! The basic subspace `B_d`: degree-`d` homogeneous polynomials constant on leaves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BasicRingError, BasicRingSettings};
use crate::averaging::{model_zero, visit_exact, AveragingError, ExactAverager, ExactVisitor, MonteCarloAverager};
use crate::linalg::{decide_rank, gram_factor, rref, sphere_gram, svd_rows, RankDecision};
use crate::models::{FoliationModel, IsoparametricModel};
use crate::poly::{
    monomial_basis, sphere_inner, ExponentVector, FPoly, Poly, Polynomial, QPoly, Rational, Scalar, ScalarMode,
    SphereMomentTable,
};
use crate::sphere::{sample_sphere_with, stream_rng};

/// Stream offset of the points that sample the tangency condition.
pub const TANGENCY_STREAM: u64 = 1 << 41;

/// Largest `|F|` accepted for a tangency point.
const TANGENCY_LEVEL_CAP: f64 = 0.9;

/// Monte Carlo check that fitted averages of monomials stay inside `B_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    /// Largest sphere-L2 distance from a fitted `[x^a]` to `B_d`.
    pub image_residual: f64,
    /// Largest sphere-L2 distance between a basis element and its fitted average.
    pub fixed_residual: f64,
    pub tolerance: f64,
    pub sample_points: usize,
    pub passed: bool,
}

/// A basis of `B_d` over the degree-`d` monomials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceBasis {
    pub degree: u32,
    #[serde(skip)]
    pub monomials: Vec<ExponentVector>,
    /// Pairwise orthogonal under the sphere inner product.
    pub elements: Vec<Polynomial>,
    /// Sphere norms squared of `elements`; all 1 for floating bases.
    pub squared_norms: Vec<f64>,
    /// Sparse reduced row echelon basis of the same space.
    pub echelon: Vec<Polynomial>,
    pub rank: usize,
    /// `None` for exact rank computations.
    pub rank_decision: Option<RankDecision>,
    pub crosscheck: Option<CrossCheck>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.rank
    }
}

/// Sphere-orthonormal coordinates `y = U c` on degree-`d` coefficient vectors.
pub(crate) struct MetricFrame {
    pub basis: Vec<ExponentVector>,
    pub u: DMatrix<f64>,
    pub u_inv: DMatrix<f64>,
}

impl MetricFrame {
    pub fn new(dim: usize, d: u32) -> Self {
        let basis = monomial_basis(dim, d);
        let table = SphereMomentTable::new(dim);
        let u = gram_factor(&sphere_gram(&basis, &table));
        let u_inv = u.clone().try_inverse().expect("Gram factor is invertible");
        MetricFrame { basis, u, u_inv }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    /// Rows of coefficient vectors to rows of metric coordinates.
    pub fn rows_to_y(&self, rows: &[Vec<f64>]) -> DMatrix<f64> {
        let c = DMatrix::from_fn(rows.len(), self.len(), |i, j| rows[i][j]);
        c * self.u.transpose()
    }

    pub fn poly_to_y(&self, p: &FPoly) -> DVector<f64> {
        &self.u * DVector::from_vec(p.coefficients_in(&self.basis))
    }

    pub fn y_to_c(&self, y: &[f64]) -> Vec<f64> {
        (&self.u_inv * DVector::from_column_slice(y)).iter().copied().collect()
    }

    pub fn y_to_poly(&self, y: &[f64]) -> FPoly {
        FPoly::from_coefficients(&self.basis, &self.y_to_c(y))
    }
}

/// `B_d` as orthonormal rows in metric coordinates.
pub(crate) struct FloatSubspace {
    pub frame: MetricFrame,
    pub q: DMatrix<f64>,
    pub decision: RankDecision,
}

impl FloatSubspace {
    pub fn rank(&self) -> usize {
        self.q.nrows()
    }

    /// Distance from `y` to the span of `q`.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        let coef = &self.q * y;
        (y - self.q.transpose() * coef).norm()
    }
}

/// Averages of all degree-`d` monomials as coefficient rows.
pub(crate) enum AveragedRows {
    Exact(Vec<Vec<Rational>>),
    Float(Vec<Vec<f64>>),
}

pub(crate) fn averaged_rows(model: &FoliationModel, d: u32) -> Result<AveragedRows, AveragingError> {
    struct Rows(u32);
    impl ExactVisitor for Rows {
        type Output = AveragedRows;
        fn visit<S: Scalar, A: ExactAverager<S>>(self, model: &A, _f: &Poly<S>) -> Result<AveragedRows, AveragingError> {
            let basis = monomial_basis(model.dim(), self.0);
            let rows: Vec<Vec<S>> = crate::exec::map_slice(&basis, |e| {
                model.average(&Poly::monomial(e.clone(), S::one())).coefficients_in(&basis)
            });
            Ok(match S::MODE {
                ScalarMode::Exact => AveragedRows::Exact(rows.iter().map(|r| r.iter().map(S::to_rational).collect()).collect()),
                ScalarMode::Float => AveragedRows::Float(rows.iter().map(|r| r.iter().map(S::to_f64).collect()).collect()),
            })
        }
    }
    visit_exact(model, &model_zero(model), Rows(d))
}

/// Tangency constraints `P(x) grad p(x) = 0` at sampled points, where `P`
/// projects onto the leaf tangent space.
fn tangency_matrix(model: &IsoparametricModel, basis: &[ExponentVector], d: u32, seed: u64) -> DMatrix<f64> {
    let n = model.dim();
    let nb = basis.len();
    let per_point = n.saturating_sub(2).max(1);
    let count = (2 * nb).div_ceil(per_point) + 8;
    let mut rng = stream_rng(seed, TANGENCY_STREAM + d as u64);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count * n);
    let mut taken = 0;
    while taken < count {
        let x = sample_sphere_with(n, &mut rng);
        if model.level(&x).abs() > TANGENCY_LEVEL_CAP {
            continue;
        }
        taken += 1;
        let mut nrm = model.sphere_gradient(&x);
        let len = nrm.iter().map(|v| v * v).sum::<f64>().sqrt();
        nrm.iter_mut().for_each(|v| *v /= len);
        // jac[j][a] = d/dx_j x^a at x
        let jac: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                basis
                    .iter()
                    .map(|e| {
                        let aj = e.get(j);
                        if aj == 0 {
                            return 0.0;
                        }
                        let mut v = aj as f64;
                        for (i, &xi) in x.iter().enumerate() {
                            let p = e.get(i) - u16::from(i == j);
                            v *= xi.powi(p as i32);
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        for i in 0..n {
            let mut row = vec![0.0; nb];
            for j in 0..n {
                let pij = f64::from(u8::from(i == j)) - x[i] * x[j] - nrm[i] * nrm[j];
                if pij != 0.0 {
                    row.iter_mut().zip(&jac[j]).for_each(|(r, v)| *r += pij * v);
                }
            }
            rows.push(row);
        }
    }
    DMatrix::from_fn(rows.len(), nb, |i, j| rows[i][j])
}

pub(crate) fn float_subspace(
    model: &FoliationModel,
    d: u32,
    settings: &BasicRingSettings,
) -> Result<FloatSubspace, BasicRingError> {
    let frame = MetricFrame::new(model.dim(), d);
    let nb = frame.len();
    let (q, decision) = match model {
        FoliationModel::Isoparametric(m) => {
            let k = tangency_matrix(m, &frame.basis, d, settings.fit.seed) * &frame.u_inv;
            let (sv, v) = svd_rows(&k);
            let decision = decide_rank(&sv, settings.tol_rank, settings.unstable_band);
            let q = v.rows(decision.rank, nb - decision.rank).into_owned();
            (q, decision)
        }
        _ => {
            let rows = match averaged_rows(model, d)? {
                AveragedRows::Exact(r) => r.iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect(),
                AveragedRows::Float(r) => r,
            };
            let (sv, v) = svd_rows(&frame.rows_to_y(&rows));
            let decision = decide_rank(&sv, settings.tol_rank, settings.unstable_band);
            (v.rows(0, decision.rank).into_owned(), decision)
        }
    };
    if decision.unstable {
        return Err(BasicRingError::RankUnstable { degree: d, decision: Box::new(decision) });
    }
    Ok(FloatSubspace { frame, q, decision })
}

pub(crate) fn crosscheck(sub: &FloatSubspace, mc: &MonteCarloAverager, d: u32) -> Result<CrossCheck, AveragingError> {
    let frame = &sub.frame;
    let points = mc.points_for_degree(d);
    let table = SphereMomentTable::new(frame.basis[0].dim());
    let gram = sphere_gram(&frame.basis, &table);
    let l2_se = |cov: &DMatrix<f64>| (&gram * cov).trace().max(0.0).sqrt();
    let mut tolerance: f64 = mc.settings().structured_tol;
    let mut image_residual: f64 = 0.0;
    for (p, fit) in mc.fit_columns(&mc.estimate_monomials(&points, d)?, d)? {
        image_residual = image_residual.max(sub.residual(&frame.poly_to_y(&p)));
        tolerance = tolerance.max(4.0 * l2_se(&fit.covariance));
    }
    let elements: Vec<FPoly> = (0..sub.rank()).map(|i| frame.y_to_poly(sub.q.row(i).transpose().as_slice())).collect();
    let mut fixed_residual: f64 = 0.0;
    if !elements.is_empty() {
        for ((p, fit), b) in mc.fit_columns(&mc.estimate(&points, &elements)?, d)?.into_iter().zip(&elements) {
            fixed_residual = fixed_residual.max((frame.poly_to_y(&p) - frame.poly_to_y(b)).norm());
            tolerance = tolerance.max(4.0 * l2_se(&fit.covariance));
        }
    }
    Ok(CrossCheck {
        image_residual,
        fixed_residual,
        tolerance,
        sample_points: points.len(),
        passed: image_residual <= tolerance && fixed_residual <= tolerance,
    })
}

/// Exact Gram-Schmidt under the sphere inner product.
fn orthogonalize(rows: &[QPoly]) -> (Vec<QPoly>, Vec<Rational>) {
    let mut out: Vec<QPoly> = Vec::new();
    let mut norms: Vec<Rational> = Vec::new();
    for v in rows {
        let mut u = v.clone();
        for (w, nw) in out.iter().zip(&norms) {
            let c = sphere_inner(v, w) / nw.clone();
            u = &u - &w.scale(&c);
        }
        norms.push(sphere_inner(&u, &u));
        out.push(u);
    }
    (out, norms)
}

/// `B_d` for degree `d >= 1`. Exact models use exact rank; floating models
/// decide rank by singular values with `settings.tol_rank`. Isoparametric
/// models take the numeric kernel of the tangency condition and, when
/// `mc` is given, cross-check it against fitted monomial averages.
pub fn basic_subspace(
    model: &FoliationModel,
    d: u32,
    settings: &BasicRingSettings,
    mc: Option<&MonteCarloAverager>,
) -> Result<SubspaceBasis, BasicRingError> {
    if d == 0 {
        return Err(BasicRingError::InvalidDegree(d));
    }
    if model.is_exact_engine() && model.mode() == ScalarMode::Exact {
        let AveragedRows::Exact(rows) = averaged_rows(model, d)? else {
            unreachable!("exact models average exactly")
        };
        let basis = monomial_basis(model.dim(), d);
        let (echelon, _) = rref(&rows, 0.0);
        let echelon: Vec<QPoly> = echelon.iter().map(|r| QPoly::from_coefficients(&basis, r)).collect();
        let (elements, norms) = orthogonalize(&echelon);
        return Ok(SubspaceBasis {
            degree: d,
            monomials: basis,
            rank: echelon.len(),
            elements: elements.into_iter().map(Polynomial::Exact).collect(),
            squared_norms: norms.iter().map(Scalar::to_f64).collect(),
            echelon: echelon.into_iter().map(Polynomial::Exact).collect(),
            rank_decision: None,
            crosscheck: None,
        });
    }
    let sub = float_subspace(model, d, settings)?;
    let crosscheck = match (model, mc) {
        (FoliationModel::Isoparametric(_), Some(mc)) => Some(crosscheck(&sub, mc, d)?),
        _ => None,
    };
    let c_rows: Vec<Vec<f64>> = (0..sub.rank()).map(|i| sub.frame.y_to_c(sub.q.row(i).transpose().as_slice())).collect();
    let (echelon, _) = rref(&c_rows, 1e-9);
    let basis = sub.frame.basis.clone();
    Ok(SubspaceBasis {
        degree: d,
        rank: sub.rank(),
        elements: c_rows.iter().map(|r| Polynomial::Float(FPoly::from_coefficients(&basis, r))).collect(),
        squared_norms: vec![1.0; sub.rank()],
        echelon: echelon.iter().map(|r| Polynomial::Float(FPoly::from_coefficients(&basis, r).pruned(1e-12))).collect(),
        monomials: basis,
        rank_decision: Some(sub.decision),
        crosscheck,
    })
}
