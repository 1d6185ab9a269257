//! Least-squares recovery of `[f]` from Monte Carlo leaf averages.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{AveragingCertificate, AveragingError, Engine, FitDiagnostics, Residuals};
use crate::linalg::{scaled_pseudo_inverse, sphere_gram};
use crate::models::{FoliationModel, IsoparametricModel, LevelSample};
use crate::poly::{monomial_basis, CompiledPoly, MonomialEvaluator, ExponentVector, FPoly, Polynomial, SphereMomentTable};
use crate::sphere::{sample_sphere_with, stream_rng};

/// Stream offset for fit-point draws; sample clouds use streams `0..workers`.
pub const FIT_POINT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSettings {
    /// Seed of the sample cloud and of the fit points.
    pub seed: u64,
    /// Fit points per unknown coefficient (at least 2).
    pub oversample: usize,
    /// Largest accepted condition estimate of the column-scaled design.
    pub condition_cap: f64,
    /// Residual tolerance of structured fits.
    pub structured_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings { seed: 0, oversample: 3, condition_cap: 1e6, structured_tol: 1e-2 }
    }
}

/// Uniform sphere points with `|F| <= 1 - 2h`.
pub fn fit_points(model: &IsoparametricModel, count: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let limit = 1.0 - 2.0 * model.params().bandwidth;
    let mut rng = stream_rng(seed, stream);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = sample_sphere_with(model.dim(), &mut rng);
        if model.level(&x).abs() <= limit {
            out.push(x);
        }
    }
    out
}

/// Leaf-average estimates of several functions at several points.
#[derive(Debug, Clone)]
pub struct PointEstimates {
    pub points: Vec<Vec<f64>>,
    /// `points x functions`.
    pub values: DMatrix<f64>,
    pub std_errors: DMatrix<f64>,
    pub min_ess: f64,
}

pub fn estimate_at_points(
    model: &IsoparametricModel,
    cloud: &LevelSample,
    points: &[Vec<f64>],
    fs: &[CompiledPoly],
) -> Result<PointEstimates, AveragingError> {
    let k = fs.len();
    let rows = crate::exec::try_map_range(points.len(), |j| {
        let scratch = RefCell::new(Vec::new());
        model.leaf_estimates(cloud, &points[j], k, |x, out| {
            let mut s = scratch.borrow_mut();
            for (o, c) in out.iter_mut().zip(fs) {
                *o = c.eval_with(x, &mut s);
            }
        })
    })?;
    let s = points.len();
    let values = DMatrix::from_fn(s, k, |j, i| rows[j][i].estimate);
    let std_errors = DMatrix::from_fn(s, k, |j, i| rows[j][i].std_error);
    let min_ess = rows.iter().flat_map(|r| r.first()).map(|e| e.ess).fold(f64::INFINITY, f64::min);
    Ok(PointEstimates { points: points.to_vec(), values, std_errors, min_ess })
}

/// Weighted-error least-squares fit with sandwich covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub condition: f64,
    pub residual_rms: f64,
}

/// Pseudo-inverse of one design matrix, reused across right-hand sides.
pub struct FitSolver {
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    condition: f64,
}

impl FitSolver {
    pub fn new(design: DMatrix<f64>, cap: f64) -> Result<Self, AveragingError> {
        let (pinv, condition) = scaled_pseudo_inverse(&design);
        if design.ncols() > 0 && !(condition <= cap) {
            return Err(AveragingError::IllConditionedFit { condition, cap });
        }
        let condition = if design.ncols() == 0 { 1.0 } else { condition };
        Ok(FitSolver { design, pinv, condition })
    }

    pub fn solve(&self, values: &[f64], errors: &[f64]) -> LinearFit {
        let pinv = &self.pinv;
        let b = DVector::from_column_slice(values);
        let c = pinv * &b;
        let scaled = DMatrix::from_fn(pinv.nrows(), pinv.ncols(), |i, j| pinv[(i, j)] * errors[j]);
        let covariance = &scaled * scaled.transpose();
        let resid = &self.design * &c - &b;
        let residual_rms = (resid.norm_squared() / values.len().max(1) as f64).sqrt();
        LinearFit {
            coefficients: c.iter().copied().collect(),
            std_errors: covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
            covariance,
            condition: self.condition,
            residual_rms,
        }
    }
}

pub fn solve_fit(design: &DMatrix<f64>, values: &[f64], errors: &[f64], cap: f64) -> Result<LinearFit, AveragingError> {
    Ok(FitSolver::new(design.clone(), cap)?.solve(values, errors))
}

pub fn monomial_design(points: &[Vec<f64>], basis: &[ExponentVector]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), basis.len(), |j, a| basis[a].eval_f64(&points[j]))
}

/// Exponent patterns `e` with `sum_i e_i * degrees[i] = m`, in lexicographic order.
pub fn enumerate_products(degrees: &[u32], m: u32) -> Vec<Vec<u32>> {
    fn rec(degrees: &[u32], i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == degrees.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let d = degrees[i];
        let max = if d == 0 { 0 } else { left / d };
        for e in (0..=max).rev() {
            cur.push(e);
            rec(degrees, i + 1, left - e * d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(degrees, 0, m, &mut Vec::new(), &mut out);
    out
}

/// One product of generator powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductTerm {
    pub exponents: Vec<u32>,
    pub poly: FPoly,
}

/// Agreement between a structured and an unstructured fit on the same samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitComparison {
    /// Sphere L2 distance between the two fitted polynomials.
    pub l2_distance: f64,
    /// Sphere L2 standard error of the unstructured fit, `sqrt(tr(G Cov))`.
    pub l2_std_error: f64,
    /// Largest `|difference| / std_error` over monomial coefficients.
    pub max_coefficient_z: f64,
    pub within_two_std_errors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuredFit {
    pub terms: Vec<ProductTerm>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub output: FPoly,
    pub residual_rms: f64,
    pub tolerance: f64,
    pub condition: f64,
    pub sample_points: usize,
    pub comparison: FitComparison,
}

/// Fit engine bound to one shared sample cloud.
pub struct MonteCarloAverager<'a> {
    model: &'a IsoparametricModel,
    cloud: LevelSample,
    settings: FitSettings,
}

impl<'a> MonteCarloAverager<'a> {
    pub fn new(model: &'a IsoparametricModel, settings: FitSettings) -> Result<Self, AveragingError> {
        if settings.oversample < 2 {
            return Err(AveragingError::Unsupported("oversample must be at least 2".into()));
        }
        let cloud = model.level_samples(settings.seed);
        Ok(MonteCarloAverager { model, cloud, settings })
    }

    pub fn model(&self) -> &IsoparametricModel {
        self.model
    }

    pub fn cloud(&self) -> &LevelSample {
        &self.cloud
    }

    pub fn settings(&self) -> &FitSettings {
        &self.settings
    }

    /// Fit points for degree `m`: `oversample` per degree-`m` monomial.
    pub fn points_for_degree(&self, m: u32) -> Vec<Vec<f64>> {
        let nb = monomial_basis(self.model.dim(), m).len().max(1);
        fit_points(self.model, self.settings.oversample * nb, self.settings.seed, FIT_POINT_STREAM + m as u64)
    }

    pub fn estimate(&self, points: &[Vec<f64>], fs: &[FPoly]) -> Result<PointEstimates, AveragingError> {
        let compiled: Vec<CompiledPoly> = fs.iter().map(CompiledPoly::new).collect();
        estimate_at_points(self.model, &self.cloud, points, &compiled)
    }

    /// Fits column `col` of `est` in the degree-`m` monomial basis.
    pub fn fit_column(&self, est: &PointEstimates, col: usize, m: u32) -> Result<(FPoly, LinearFit), AveragingError> {
        Ok(self.fit_columns(est, m)?.swap_remove(col))
    }

    /// Fits every column of `est` with one shared design.
    pub fn fit_columns(&self, est: &PointEstimates, m: u32) -> Result<Vec<(FPoly, LinearFit)>, AveragingError> {
        let basis = monomial_basis(self.model.dim(), m);
        let solver = FitSolver::new(monomial_design(&est.points, &basis), self.settings.condition_cap)?;
        Ok((0..est.values.ncols())
            .map(|col| {
                let vals: Vec<f64> = est.values.column(col).iter().copied().collect();
                let errs: Vec<f64> = est.std_errors.column(col).iter().copied().collect();
                let fit = solver.solve(&vals, &errs);
                (FPoly::from_coefficients(&basis, &fit.coefficients), fit)
            })
            .collect())
    }

    /// Leaf averages of every degree-`m` monomial at `points`.
    pub fn estimate_monomials(&self, points: &[Vec<f64>], m: u32) -> Result<PointEstimates, AveragingError> {
        let ev = MonomialEvaluator::new(self.model.dim(), m);
        let k = ev.len();
        let rows = crate::exec::try_map_range(points.len(), |j| {
            let scratch = RefCell::new(Vec::new());
            self.model.leaf_estimates(&self.cloud, &points[j], k, |x, out| ev.eval_into(x, &mut scratch.borrow_mut(), out))
        })?;
        let s = points.len();
        Ok(PointEstimates {
            points: points.to_vec(),
            values: DMatrix::from_fn(s, k, |j, i| rows[j][i].estimate),
            std_errors: DMatrix::from_fn(s, k, |j, i| rows[j][i].std_error),
            min_ess: rows.iter().flat_map(|r| r.first()).map(|e| e.ess).fold(f64::INFINITY, f64::min),
        })
    }

    /// Fitted `[f]` on the degree-`deg f` fit points.
    pub fn fit_average(&self, f: &FPoly) -> Result<FPoly, AveragingError> {
        if f.is_zero() {
            return Ok(f.clone());
        }
        if !f.is_homogeneous() {
            return Err(AveragingError::NotHomogeneous);
        }
        let m = f.degree().unwrap_or(0);
        let est = self.estimate(&self.points_for_degree(m), std::slice::from_ref(f))?;
        Ok(self.fit_column(&est, 0, m)?.0)
    }

    /// Largest leaf-tangential component of `grad p` over `points`.
    pub fn tangential_defect(&self, p: &FPoly, points: &[Vec<f64>]) -> f64 {
        let grad: Vec<CompiledPoly> = p.gradient().iter().map(CompiledPoly::new).collect();
        points
            .iter()
            .map(|x| {
                let gp: Vec<f64> = grad.iter().map(|c| c.eval(x)).collect();
                let n = self.model.sphere_gradient(x);
                let nn = n.iter().map(|v| v * v).sum::<f64>().sqrt();
                let radial: f64 = gp.iter().zip(x).map(|(a, b)| a * b).sum();
                let mut v: Vec<f64> = gp.iter().zip(x).map(|(a, b)| a - radial * b).collect();
                if nn > 0.0 {
                    let along: f64 = v.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>() / (nn * nn);
                    v.iter_mut().zip(&n).for_each(|(a, b)| *a -= along * b);
                }
                v.iter().map(|a| a * a).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn diagnostics(&self, fit: &LinearFit, est: &PointEstimates) -> FitDiagnostics {
        let p = self.model.params();
        FitDiagnostics {
            condition: fit.condition,
            residual_rms: fit.residual_rms,
            sample_points: est.points.len(),
            samples_per_cloud: self.cloud.len(),
            bandwidth: p.bandwidth,
            seed: self.settings.seed,
            workers: p.workers,
            min_ess: est.min_ess,
            coefficient_std_errors: fit.std_errors.clone(),
        }
    }

    /// Unstructured (all monomials of degree `m`) fit of `[f]` with residuals.
    pub fn average(&self, f: &FPoly) -> Result<AveragingCertificate, AveragingError> {
        if f.dim() != self.model.dim() {
            return Err(crate::models::ModelError::DimensionMismatch { expected: self.model.dim(), found: f.dim() }.into());
        }
        if !f.is_homogeneous() {
            return Err(AveragingError::NotHomogeneous);
        }
        let m = f.degree().unwrap_or(0);
        let points = self.points_for_degree(m);
        let lap = f.laplacian();
        let est = self.estimate(&points, &[f.clone(), lap])?;
        let (af, fit) = self.fit_column(&est, 0, m)?;
        let laplacian_commutation = if m >= 2 {
            let (lap_avg, _) = self.fit_column(&est, 1, m - 2)?;
            (&af.laplacian() - &lap_avg).max_abs_coeff()
        } else {
            af.laplacian().max_abs_coeff()
        };
        let again = self.estimate(&points, std::slice::from_ref(&af))?;
        let (aaf, _) = self.fit_column(&again, 0, m)?;
        let table = SphereMomentTable::new(f.dim());
        let residuals = Residuals {
            idempotence: (&aaf - &af).max_abs_coeff(),
            leaf_constancy: self.tangential_defect(&af, &points),
            laplacian_commutation,
            contraction_slack: table.mean(&(f * f)) - table.mean(&(&af * &af)),
            selfadjoint_gap: (table.inner(&af, &af) - table.inner(f, &af)).abs(),
        };
        Ok(AveragingCertificate {
            model: self.model.name().to_string(),
            input: Polynomial::Float(f.clone()),
            output: Polynomial::Float(af.clone()),
            engine: Engine::VandermondeFit,
            degree: m,
            degree_preserved: af.is_zero() || (af.is_homogeneous() && af.degree() == Some(m)),
            residuals,
            fit: Some(self.diagnostics(&fit, &est)),
        })
    }

    /// Fit of `[f]` in the span of degree-`m` products of `gens`, compared with
    /// the unstructured fit on the same samples.
    pub fn structured(&self, f: &FPoly, gens: &[FPoly]) -> Result<StructuredFit, AveragingError> {
        if gens.is_empty() {
            return Err(AveragingError::Unsupported("structured fit needs at least one generator".into()));
        }
        if !f.is_homogeneous() {
            return Err(AveragingError::NotHomogeneous);
        }
        let mut degrees = Vec::with_capacity(gens.len());
        for g in gens {
            match g.degree() {
                Some(d) if d > 0 && g.is_homogeneous() => degrees.push(d),
                _ => return Err(AveragingError::Unsupported("generators must be homogeneous of positive degree".into())),
            }
        }
        let m = f.degree().unwrap_or(0);
        let terms: Vec<ProductTerm> = enumerate_products(&degrees, m)
            .into_iter()
            .map(|e| {
                let mut p = FPoly::one(f.dim());
                for (g, &k) in gens.iter().zip(&e) {
                    p = &p * &g.pow(k);
                }
                ProductTerm { exponents: e, poly: p }
            })
            .collect();
        let points = self.points_for_degree(m);
        let est = self.estimate(&points, std::slice::from_ref(f))?;
        let vals: Vec<f64> = est.values.column(0).iter().copied().collect();
        let errs: Vec<f64> = est.std_errors.column(0).iter().copied().collect();
        let compiled: Vec<CompiledPoly> = terms.iter().map(|t| CompiledPoly::new(&t.poly)).collect();
        let design = DMatrix::from_fn(points.len(), terms.len(), |j, i| compiled[i].eval(&points[j]));
        let fit = solve_fit(&design, &vals, &errs, self.settings.condition_cap)?;
        let mut output = FPoly::zero(f.dim());
        for (t, c) in terms.iter().zip(&fit.coefficients) {
            output = &output + &t.poly.scale(c);
        }
        let se_rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len().max(1) as f64).sqrt();
        let tolerance = self.settings.structured_tol.max(3.0 * se_rms);
        if fit.residual_rms > tolerance {
            return Err(AveragingError::BasisDeficient { residual: fit.residual_rms, tolerance });
        }
        let (unstructured, ufit) = self.fit_column(&est, 0, m)?;
        let basis = monomial_basis(f.dim(), m);
        let diff: Vec<f64> = (&unstructured - &output).coefficients_in(&basis);
        let gram = sphere_gram(&basis, &SphereMomentTable::new(f.dim()));
        let d = DVector::from_column_slice(&diff);
        let l2_distance = (d.transpose() * &gram * &d)[(0, 0)].max(0.0).sqrt();
        let l2_std_error = (&gram * &ufit.covariance).trace().max(0.0).sqrt();
        let max_coefficient_z = diff
            .iter()
            .zip(&ufit.std_errors)
            .map(|(a, s)| if *s > 0.0 { a.abs() / s } else if *a == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max);
        Ok(StructuredFit {
            terms,
            coefficients: fit.coefficients.clone(),
            std_errors: fit.std_errors.clone(),
            output,
            residual_rms: fit.residual_rms,
            tolerance,
            condition: fit.condition,
            sample_points: points.len(),
            comparison: FitComparison {
                l2_distance,
                l2_std_error,
                max_coefficient_z,
                within_two_std_errors: l2_distance <= 2.0 * l2_std_error,
            },
        })
    }
}

/// Structured fit of `[f]` over products of `gens` on an isoparametric model.
pub fn average_structured(
    model: &FoliationModel,
    f: &Polynomial,
    gens: &[Polynomial],
    settings: &FitSettings,
) -> Result<StructuredFit, AveragingError> {
    let FoliationModel::Isoparametric(m) = model else {
        return Err(AveragingError::Unsupported("structured fits apply to isoparametric models".into()));
    };
    let gens: Vec<FPoly> = gens.iter().map(Polynomial::to_float).collect();
    MonteCarloAverager::new(m, settings.clone())?.structured(&f.to_float(), &gens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CartanPolynomial, EstimatorParams};
    use crate::poly::parse_poly;

    fn g2(n: usize) -> IsoparametricModel {
        let f = CartanPolynomial::rational(parse_poly("x1^2 + x2^2 - x3^2 - x4^2", 4).unwrap());
        IsoparametricModel::new(f, 2, EstimatorParams { samples: n, ..EstimatorParams::default() }).unwrap()
    }

    fn fp(s: &str) -> FPoly {
        parse_poly(s, 4).unwrap()
    }

    #[test]
    fn product_patterns() {
        assert_eq!(enumerate_products(&[2, 2], 2), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(enumerate_products(&[2, 2], 6).len(), 4);
        assert_eq!(enumerate_products(&[2, 4], 3).len(), 0);
        assert_eq!(enumerate_products(&[1, 2], 4), vec![vec![4, 0], vec![2, 1], vec![0, 2]]);
    }

    #[test]
    fn structured_fit_recovers_coefficients() {
        let model = g2(200_000);
        let avg = MonteCarloAverager::new(&model, FitSettings { seed: 3, ..FitSettings::default() }).unwrap();
        let gens = [fp("x1^2 + x2^2 + x3^2 + x4^2"), fp("x1^2 + x2^2 - x3^2 - x4^2")];
        let s = avg.structured(&fp("x1^2"), &gens).unwrap();
        assert!((s.coefficients[0] - 0.25).abs() < 0.02, "{:?}", s.coefficients);
        assert!((s.coefficients[1] - 0.25).abs() < 0.02, "{:?}", s.coefficients);
        let cubed = avg.structured(&gens[1].pow(3), &gens).unwrap();
        let pos = cubed.terms.iter().position(|t| t.exponents == vec![0, 3]).unwrap();
        // exact in the algebra; the remaining error is the O(h^2) kernel bias
        for (i, c) in cubed.coefficients.iter().enumerate() {
            let expected = if i == pos { 1.0 } else { 0.0 };
            assert!((c - expected).abs() < 0.02, "{:?}", cubed.coefficients);
        }
        assert!(matches!(avg.structured(&fp("x1^2"), &gens[..1]), Err(AveragingError::BasisDeficient { .. })));
    }

    #[test]
    fn unstructured_fit_certificate() {
        let model = g2(200_000);
        let avg = MonteCarloAverager::new(&model, FitSettings { seed: 5, ..FitSettings::default() }).unwrap();
        let cert = avg.average(&fp("x1^2")).unwrap();
        let Polynomial::Float(out) = &cert.output else { panic!() };
        let oracle = fp("1/2*x1^2 + 1/2*x2^2");
        assert!((out - &oracle).max_abs_coeff() < 0.03, "{out}");
        assert_eq!(cert.engine, Engine::VandermondeFit);
        assert!(cert.residuals.idempotence < 0.03);
        assert!(cert.residuals.contraction_slack > -0.01);
        assert!(cert.fit.as_ref().unwrap().condition < 1e6);
    }
}
