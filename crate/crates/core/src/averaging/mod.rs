//! The averaging operator `f -> [f]`, the leafwise mean of `f` extended
//! homogeneously to the cone.
//!
//! Group and torus models average in closed form. Isoparametric models fit a
//! homogeneous polynomial of the same degree to Monte Carlo leaf averages,
//! either over all monomials or over products of known basic generators.

mod fit;
mod identities;

pub use fit::{
    average_structured, enumerate_products, estimate_at_points, fit_points, monomial_design, solve_fit, FitComparison,
    FitSettings, LinearFit, MonteCarloAverager, PointEstimates, ProductTerm, StructuredFit, FIT_POINT_STREAM,
};
pub use identities::{identity_report, verify_operator_identities, IdentityCheck, IdentityReport};

use serde::Serialize;

use crate::models::{FiniteGroupModel, FoliationModel, ModelError, TorusModel};
use crate::poly::{sphere_inner, sphere_mean, Poly, PolyError, Polynomial, Scalar, ScalarMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AveragingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("input polynomial is not homogeneous")]
    NotHomogeneous,
    #[error("scalar mode mismatch: model averages {expected} polynomials, input is {found}")]
    ModeMismatch { expected: ScalarMode, found: ScalarMode },
    #[error("fit is ill-conditioned: condition estimate {condition:e} exceeds cap {cap:e}")]
    IllConditionedFit { condition: f64, cap: f64 },
    #[error("generator algebra cannot explain the samples: residual {residual:e} above tolerance {tolerance:e}")]
    BasisDeficient { residual: f64, tolerance: f64 },
    #[error("identity {identity} violated with residual {residual:e}")]
    IdentityViolation { identity: String, residual: f64 },
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    StructuredFit,
    VandermondeFit,
}

/// Residuals of the operator identities attached to one average.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Residuals {
    /// Largest coefficient of `[[f]] - [f]`.
    pub idempotence: f64,
    /// Exact engines: largest coefficient of the change of `[f]` under the
    /// group generators or torus fields. Fits: largest leaf-tangential
    /// gradient of `[f]` at the sample points.
    pub leaf_constancy: f64,
    /// Largest coefficient of `Delta [f] - [Delta f]`.
    pub laplacian_commutation: f64,
    /// `mean(f^2) - mean([f]^2)` over the sphere.
    pub contraction_slack: f64,
    /// `|<[f],[f]> - <f,[f]>|`.
    pub selfadjoint_gap: f64,
}

/// Sampling diagnostics of a fitted average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub condition: f64,
    pub residual_rms: f64,
    pub sample_points: usize,
    pub samples_per_cloud: usize,
    pub bandwidth: f64,
    pub seed: u64,
    pub workers: usize,
    pub min_ess: f64,
    pub coefficient_std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingCertificate {
    pub model: String,
    pub input: Polynomial,
    pub output: Polynomial,
    pub engine: Engine,
    pub degree: u32,
    pub degree_preserved: bool,
    pub residuals: Residuals,
    pub fit: Option<FitDiagnostics>,
}

/// A model that averages `Poly<S>` in closed form.
pub trait ExactAverager<S: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn average(&self, f: &Poly<S>) -> Poly<S>;
    /// How far `p` is from being leaf-constant, measured symbolically.
    fn leaf_defect(&self, p: &Poly<S>) -> f64;
}

impl<S: Scalar> ExactAverager<S> for FiniteGroupModel<S> {
    fn dim(&self) -> usize {
        FiniteGroupModel::dim(self)
    }

    fn name(&self) -> &str {
        FiniteGroupModel::name(self)
    }

    fn average(&self, f: &Poly<S>) -> Poly<S> {
        self.reynolds(f).expect("dimension checked by caller")
    }

    fn leaf_defect(&self, p: &Poly<S>) -> f64 {
        self.generators().iter().map(|g| (&p.substitute_linear(&g.rows()) - p).max_abs_coeff()).fold(0.0, f64::max)
    }
}

impl<S: Scalar> ExactAverager<S> for TorusModel {
    fn dim(&self) -> usize {
        TorusModel::dim(self)
    }

    fn name(&self) -> &str {
        TorusModel::name(self)
    }

    fn average(&self, f: &Poly<S>) -> Poly<S> {
        self.reynolds_any_mode(f)
    }

    /// Largest coefficient of `X_j p` over the infinitesimal generators
    /// `X_j = sum_k W[k][j] (x_(2k) d/dx_(2k+1) - x_(2k+1) d/dx_(2k))`.
    fn leaf_defect(&self, p: &Poly<S>) -> f64 {
        let dim = TorusModel::dim(self);
        (0..self.torus_rank())
            .map(|j| {
                let mut field = Poly::zero(dim);
                for k in 0..self.planes() {
                    let w = self.weights()[k][j];
                    if w == 0 {
                        continue;
                    }
                    let rot = &(&Poly::var(dim, 2 * k) * &p.partial(2 * k + 1))
                        - &(&Poly::var(dim, 2 * k + 1) * &p.partial(2 * k));
                    field = &field + &rot.scale(&S::from_i64(w));
                }
                field.max_abs_coeff()
            })
            .fold(0.0, f64::max)
    }
}

/// Generic operation over the closed-form engines.
pub trait ExactVisitor {
    type Output;
    fn visit<S: Scalar, A: ExactAverager<S>>(self, model: &A, f: &Poly<S>) -> Result<Self::Output, AveragingError>;
}

/// Runs `visitor` on the model's closed-form engine in the scalar mode of `f`.
pub fn visit_exact<V: ExactVisitor>(model: &FoliationModel, f: &Polynomial, visitor: V) -> Result<V::Output, AveragingError> {
    if f.dim() != model.dim() {
        return Err(ModelError::DimensionMismatch { expected: model.dim(), found: f.dim() }.into());
    }
    match (model, f) {
        (FoliationModel::FiniteGroup(m), Polynomial::Exact(p)) => visitor.visit(m, p),
        (FoliationModel::FiniteGroupFloat(m), Polynomial::Float(p)) => visitor.visit(m, p),
        (FoliationModel::Torus(m), Polynomial::Exact(p)) if m.mode() == ScalarMode::Exact => visitor.visit(m, p),
        (FoliationModel::Torus(m), Polynomial::Float(p)) if m.mode() == ScalarMode::Float => visitor.visit(m, p),
        (FoliationModel::Isoparametric(_), _) => {
            Err(AveragingError::Unsupported("isoparametric models have no closed-form averaging engine".into()))
        }
        _ => Err(AveragingError::ModeMismatch { expected: model.mode(), found: f.mode() }),
    }
}

/// The zero polynomial in the model's scalar mode, for visitors without input.
pub fn model_zero(model: &FoliationModel) -> Polynomial {
    match model.mode() {
        ScalarMode::Exact => Polynomial::Exact(Poly::zero(model.dim())),
        ScalarMode::Float => Polynomial::Float(Poly::zero(model.dim())),
    }
}

/// Closed-form Reynolds operator of a group or torus model.
pub fn reynolds(model: &FoliationModel, f: &Polynomial) -> Result<Polynomial, AveragingError> {
    struct Avg;
    impl ExactVisitor for Avg {
        type Output = Polynomial;
        fn visit<S: Scalar, A: ExactAverager<S>>(self, model: &A, f: &Poly<S>) -> Result<Polynomial, AveragingError> {
            Ok(wrap(model.average(f)))
        }
    }
    visit_exact(model, f, Avg)
}

/// Converts a generic polynomial back into the runtime enum.
pub fn wrap<S: Scalar>(p: Poly<S>) -> Polynomial {
    match S::MODE {
        ScalarMode::Exact => Polynomial::Exact(p.map_coefficients(S::to_rational)),
        ScalarMode::Float => Polynomial::Float(p.map_coefficients(|c| c.to_f64())),
    }
}

fn sub_norm<S: Scalar>(a: &Poly<S>, b: &Poly<S>) -> f64 {
    (a - b).max_abs_coeff()
}

/// Exact-engine average with all residuals.
pub fn exact_certificate<S: Scalar, A: ExactAverager<S>>(model: &A, f: &Poly<S>) -> Result<AveragingCertificate, AveragingError> {
    if f.dim() != model.dim() {
        return Err(ModelError::DimensionMismatch { expected: model.dim(), found: f.dim() }.into());
    }
    if !f.is_homogeneous() {
        return Err(AveragingError::NotHomogeneous);
    }
    let m = f.degree().unwrap_or(0);
    let af = model.average(f);
    let residuals = Residuals {
        idempotence: sub_norm(&model.average(&af), &af),
        leaf_constancy: model.leaf_defect(&af),
        laplacian_commutation: sub_norm(&af.laplacian(), &model.average(&f.laplacian())),
        contraction_slack: (sphere_mean(&(f * f)) - sphere_mean(&(&af * &af))).to_f64(),
        selfadjoint_gap: (sphere_inner(&af, &af) - sphere_inner(f, &af)).abs_f64(),
    };
    let degree_preserved = af.is_zero() || (af.is_homogeneous() && af.degree() == Some(m));
    Ok(AveragingCertificate {
        model: model.name().to_string(),
        input: wrap(f.clone()),
        output: wrap(af),
        engine: Engine::Exact,
        degree: m,
        degree_preserved,
        residuals,
        fit: None,
    })
}

/// Average of a homogeneous polynomial with its certificate. Isoparametric
/// models use the full monomial fit with `settings`.
pub fn average(model: &FoliationModel, f: &Polynomial, settings: &FitSettings) -> Result<AveragingCertificate, AveragingError> {
    if !f.is_homogeneous() {
        return Err(AveragingError::NotHomogeneous);
    }
    match model {
        FoliationModel::Isoparametric(m) => MonteCarloAverager::new(m, settings.clone())?.average(&f.to_float()),
        _ => {
            struct Cert;
            impl ExactVisitor for Cert {
                type Output = AveragingCertificate;
                fn visit<S: Scalar, A: ExactAverager<S>>(self, model: &A, f: &Poly<S>) -> Result<AveragingCertificate, AveragingError> {
                    exact_certificate(model, f)
                }
            }
            visit_exact(model, f, Cert)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{group_closure, signed_permutation};
    use crate::poly::{parse_poly, QPoly, Rational};

    fn b3() -> FoliationModel {
        FoliationModel::FiniteGroup(
            group_closure(
                vec![
                    signed_permutation::<Rational>(&[1, 0, 2], &[1, 1, 1]),
                    signed_permutation(&[0, 2, 1], &[1, 1, 1]),
                    signed_permutation(&[0, 1, 2], &[-1, 1, 1]),
                ],
                100,
            )
            .unwrap()
            .with_name("B3"),
        )
    }

    fn exact(s: &str, d: usize) -> Polynomial {
        Polynomial::Exact(parse_poly::<Rational>(s, d).unwrap())
    }

    #[test]
    fn exact_passthrough_matches_reynolds() {
        let m = b3();
        let f = exact("x1^3*x2 + 2*x1^4 - x2^2*x3^2", 3);
        let cert = average(&m, &f, &FitSettings::default()).unwrap();
        assert_eq!(cert.output, reynolds(&m, &f).unwrap());
        assert_eq!(cert.engine, Engine::Exact);
        assert!(cert.degree_preserved);
        let r = &cert.residuals;
        assert_eq!((r.idempotence, r.leaf_constancy, r.laplacian_commutation, r.selfadjoint_gap), (0.0, 0.0, 0.0, 0.0));
        assert!(r.contraction_slack >= 0.0);
    }

    #[test]
    fn odd_function_averages_to_zero() {
        let pm = FoliationModel::FiniteGroup(group_closure(vec![signed_permutation::<Rational>(&[0, 1], &[-1, -1])], 4).unwrap());
        let cert = average(&pm, &exact("x1", 2), &FitSettings::default()).unwrap();
        assert_eq!(cert.output, exact("0", 2));
        assert_eq!(cert.residuals.contraction_slack, 0.5);
    }

    #[test]
    fn torus_leaf_defect_detects_non_invariants() {
        let t2 = TorusModel::new(vec![vec![1, 0], vec![0, 1]], 0, ScalarMode::Exact).unwrap();
        let p: QPoly = parse_poly("x1^2", 4).unwrap();
        assert!(ExactAverager::<Rational>::leaf_defect(&t2, &p) > 0.0);
        let q: QPoly = parse_poly("x1^2 + x2^2 - 3*x3^2 - 3*x4^2", 4).unwrap();
        assert_eq!(ExactAverager::<Rational>::leaf_defect(&t2, &q), 0.0);
    }

    #[test]
    fn mode_and_shape_errors() {
        let m = b3();
        let f = Polynomial::Float(parse_poly("x1^2", 3).unwrap());
        assert!(matches!(average(&m, &f, &FitSettings::default()), Err(AveragingError::ModeMismatch { .. })));
        assert!(matches!(average(&m, &exact("x1^2 + x1", 3), &FitSettings::default()), Err(AveragingError::NotHomogeneous)));
    }
}
