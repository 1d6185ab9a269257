//! Singular Riemannian foliations of round spheres: orbits of finite
//! orthogonal groups, orbits of linear torus actions, and the level sets of
//! Cartan–Münzner polynomials. Each model knows its leaves through a
//! same-leaf predicate and a way to produce points on a given leaf.

mod group;
mod iso;
mod torus;

pub use group::{group_closure, signed_permutation, FiniteGroupModel, Matrix, TOL_DEDUP, TOL_ORTH};
pub use iso::{
    validate_munzner, CartanPolynomial, Estimate, EstimatorParams, IsoparametricModel, LevelSample, MunznerConstant,
    SPHERE_TOL,
};
pub use torus::TorusModel;

use rand::Rng;

use crate::poly::{Rational, ScalarMode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scalar mode mismatch: model is {expected}, input is {found}")]
    ModeMismatch { expected: ScalarMode, found: ScalarMode },
    #[error("generator {index} is not orthogonal (max |g^T g - I| = {defect:e})")]
    NonOrthogonalGenerator { index: usize, defect: f64 },
    #[error("group closure exceeded max_group_size = {limit}")]
    GroupTooLarge { limit: usize },
    #[error("not a Cartan-Muenzner polynomial: {identity} fails with residual {residual}")]
    NotCartanMunzner { identity: String, residual: String },
    #[error("point is off the unit sphere (norm {norm})")]
    OffSphere { norm: f64 },
    #[error("leaf level {level} is within bandwidth {bandwidth} of a singular leaf")]
    NearSingularLeaf { level: f64, bandwidth: f64 },
    #[error("effective sample size {ess:.1} below min_ess = {min_ess}")]
    EffectiveSampleTooSmall { ess: f64, min_ess: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Any supported foliation model.
#[derive(Debug, Clone)]
pub enum FoliationModel {
    FiniteGroup(FiniteGroupModel<Rational>),
    FiniteGroupFloat(FiniteGroupModel<f64>),
    Torus(TorusModel),
    Isoparametric(IsoparametricModel),
}

impl FoliationModel {
    pub fn kind(&self) -> &'static str {
        match self {
            FoliationModel::FiniteGroup(_) | FoliationModel::FiniteGroupFloat(_) => "finite_group",
            FoliationModel::Torus(_) => "torus",
            FoliationModel::Isoparametric(_) => "isoparametric",
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FoliationModel::FiniteGroup(m) => m.name(),
            FoliationModel::FiniteGroupFloat(m) => m.name(),
            FoliationModel::Torus(m) => m.name(),
            FoliationModel::Isoparametric(m) => m.name(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FoliationModel::FiniteGroup(m) => m.dim(),
            FoliationModel::FiniteGroupFloat(m) => m.dim(),
            FoliationModel::Torus(m) => m.dim(),
            FoliationModel::Isoparametric(m) => m.dim(),
        }
    }

    /// Scalar mode of the polynomials this model averages.
    pub fn mode(&self) -> ScalarMode {
        match self {
            FoliationModel::FiniteGroup(_) => ScalarMode::Exact,
            FoliationModel::FiniteGroupFloat(_) | FoliationModel::Isoparametric(_) => ScalarMode::Float,
            FoliationModel::Torus(m) => m.mode(),
        }
    }

    /// Whether averages are computed in closed form (group and torus models).
    pub fn is_exact_engine(&self) -> bool {
        !matches!(self, FoliationModel::Isoparametric(_))
    }

    pub fn same_leaf(&self, p: &[f64], q: &[f64], tol: f64) -> Result<bool, ModelError> {
        match self {
            FoliationModel::FiniteGroup(m) => m.same_leaf(p, q, tol),
            FoliationModel::FiniteGroupFloat(m) => m.same_leaf(p, q, tol),
            FoliationModel::Torus(m) => m.same_leaf(p, q, tol),
            FoliationModel::Isoparametric(m) => m.same_leaf(p, q, tol),
        }
    }

    /// A random point on the leaf through `p`, when one can be constructed.
    pub fn random_mate<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Option<Vec<f64>> {
        match self {
            FoliationModel::FiniteGroup(m) => Some(m.random_mate(p, rng)),
            FoliationModel::FiniteGroupFloat(m) => Some(m.random_mate(p, rng)),
            FoliationModel::Torus(m) => Some(m.random_mate(p, rng)),
            FoliationModel::Isoparametric(m) => m.random_mate(p, rng),
        }
    }

    /// How same-leaf mates are produced, for certificate provenance.
    pub fn mate_construction(&self) -> &'static str {
        match self {
            FoliationModel::FiniteGroup(_) | FoliationModel::FiniteGroupFloat(_) => "random group element",
            FoliationModel::Torus(_) => "random torus phase",
            FoliationModel::Isoparametric(m) if m.symmetry().is_some() => "random phase of the configured torus symmetry",
            FoliationModel::Isoparametric(_) => {
                "no leaf-transitive symmetry configured: Newton projection onto the level set, so same-leaf testing reduces to the F-level predicate"
            }
        }
    }

    /// Leaf invariants for export; empty for finite groups.
    pub fn leaf_labels(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FoliationModel::FiniteGroup(_) | FoliationModel::FiniteGroupFloat(_) => Vec::new(),
            FoliationModel::Torus(m) => m.labels(x),
            FoliationModel::Isoparametric(m) => vec![m.level(x)],
        }
    }

    pub fn label_names(&self) -> Vec<String> {
        match self {
            FoliationModel::FiniteGroup(_) | FoliationModel::FiniteGroupFloat(_) => Vec::new(),
            FoliationModel::Torus(m) => (1..=m.planes())
                .map(|k| format!("radius2_{k}"))
                .chain((1..=m.n_fix()).map(|k| format!("fixed_{k}")))
                .collect(),
            FoliationModel::Isoparametric(_) => vec!["level".to_string()],
        }
    }
}
