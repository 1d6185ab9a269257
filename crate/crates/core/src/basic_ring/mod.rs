//! The ring of basic polynomials: leaf-constant homogeneous polynomials,
//! their degree-wise dimensions, and a minimal set of generators.

mod molien;
mod subspace;

pub use molien::{det_one_minus_t, molien_dimensions};
pub use subspace::{basic_subspace, CrossCheck, SubspaceBasis, TANGENCY_STREAM};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::averaging::{enumerate_products, reynolds, AveragingError, FitSettings, MonteCarloAverager};
use crate::linalg::{decide_rank, rref, svd_rows, RankDecision, SpanBuilder};
use crate::models::{FoliationModel, ModelError};
use crate::poly::{monomial_basis, rationalize, FPoly, Poly, PolyError, Polynomial, QPoly, Rational, Scalar, ScalarMode};
use subspace::{averaged_rows, float_subspace, AveragedRows, FloatSubspace, MetricFrame};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BasicRingError {
    #[error(transparent)]
    Averaging(#[from] AveragingError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("rank of B_{degree} is unstable: singular values cluster near tolerance {:e}", decision.tolerance)]
    RankUnstable { degree: u32, decision: Box<RankDecision> },
    #[error("generators fail to span B_d at degrees {degrees:?} (max residual {max_residual:e})")]
    GenerationGap { degrees: Vec<u32>, max_residual: f64 },
    #[error("Molien series needs a rational-mode finite group model")]
    RequiresRationalGroup,
    #[error("degree must be positive, got {0}")]
    InvalidDegree(u32),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid generator file: {0}")]
    InvalidFile(String),
}

impl From<ModelError> for BasicRingError {
    fn from(e: ModelError) -> Self {
        BasicRingError::Averaging(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasicRingSettings {
    /// Relative singular value below which a direction counts as zero.
    pub tol_rank: f64,
    /// Singular values within this factor of `tol_rank` make the rank unstable.
    pub unstable_band: f64,
    /// Largest denominator tried when rationalizing floating generators.
    pub max_denominator: u64,
    /// Largest coefficient change accepted by rationalization.
    pub rationalize_tol: f64,
    /// Relative residual accepted by floating generation checks.
    pub generation_tol: f64,
    /// Monte Carlo settings of isoparametric cross-checks.
    pub fit: FitSettings,
    /// Cross-check isoparametric `B_d` against fitted monomial averages.
    pub crosscheck: bool,
}

impl Default for BasicRingSettings {
    fn default() -> Self {
        BasicRingSettings {
            tol_rank: 1e-8,
            unstable_band: 100.0,
            max_denominator: 1000,
            rationalize_tol: 1e-9,
            generation_tol: 1e-6,
            fit: FitSettings::default(),
            crosscheck: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub degree: u32,
    pub poly: Polynomial,
}

/// Where a generator set came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub kind: String,
    pub engine: String,
    pub tol_rank: Option<f64>,
    pub max_denominator: Option<u64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub bandwidth: Option<f64>,
    pub workers: Option<usize>,
    /// Singular value gap of each rank decision, by degree.
    #[serde(default)]
    pub rank_gaps: Vec<Option<f64>>,
    #[serde(default)]
    pub crosschecks: Vec<Option<CrossCheck>>,
}

/// Generators of the basic ring up to a degree cap.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet {
    pub dim: usize,
    pub degree_cap: u32,
    pub generators: Vec<Generator>,
    /// `dim B_d` for `d = 1..=degree_cap`; empty for hand-written sets.
    pub basic_dims: Vec<usize>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct GeneratorEntry {
    degree: u32,
    mode: ScalarMode,
    poly: String,
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    dim: usize,
    degree_cap: u32,
    generators: Vec<GeneratorEntry>,
    #[serde(default)]
    basic_dims: Vec<usize>,
    #[serde(default)]
    warnings: Vec<String>,
    #[serde(default)]
    provenance: Provenance,
}

impl Serialize for GeneratorSet {
    fn serialize<Z: serde::Serializer>(&self, s: Z) -> Result<Z::Ok, Z::Error> {
        GeneratorFile {
            dim: self.dim,
            degree_cap: self.degree_cap,
            generators: self
                .generators
                .iter()
                .map(|g| GeneratorEntry { degree: g.degree, mode: g.poly.mode(), poly: g.poly.to_string() })
                .collect(),
            basic_dims: self.basic_dims.clone(),
            warnings: self.warnings.clone(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl GeneratorSet {
    /// A hand-written set; degrees come from the polynomials.
    pub fn from_polys(dim: usize, polys: Vec<Polynomial>, degree_cap: u32) -> Result<Self, BasicRingError> {
        let generators = polys
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                if p.dim() != dim {
                    return Err(BasicRingError::InvalidFile(format!("generator {i} has dimension {}", p.dim())));
                }
                match p.degree() {
                    Some(degree) if degree > 0 && p.is_homogeneous() => Ok(Generator { degree, poly: p }),
                    _ => Err(BasicRingError::InvalidFile(format!("generator {i} is not homogeneous of positive degree"))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GeneratorSet {
            dim,
            degree_cap,
            generators,
            basic_dims: Vec::new(),
            warnings: Vec::new(),
            provenance: Provenance { engine: "user".into(), ..Provenance::default() },
        })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.generators.iter().map(|g| g.degree).collect()
    }

    pub fn polys(&self) -> Vec<Polynomial> {
        self.generators.iter().map(|g| g.poly.clone()).collect()
    }

    pub fn float_polys(&self) -> Vec<FPoly> {
        self.generators.iter().map(|g| g.poly.to_float()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("generator sets serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, BasicRingError> {
        let file: GeneratorFile = serde_json::from_str(text).map_err(|e| BasicRingError::InvalidFile(e.to_string()))?;
        let generators = file
            .generators
            .iter()
            .map(|g| {
                let poly = Polynomial::parse(&g.poly, file.dim, g.mode)?;
                if !poly.is_homogeneous() || poly.degree() != Some(g.degree) {
                    return Err(BasicRingError::InvalidFile(format!("{} is not homogeneous of degree {}", g.poly, g.degree)));
                }
                Ok(Generator { degree: g.degree, poly })
            })
            .collect::<Result<Vec<_>, BasicRingError>>()?;
        Ok(GeneratorSet {
            dim: file.dim,
            degree_cap: file.degree_cap,
            generators,
            basic_dims: file.basic_dims,
            warnings: file.warnings,
            provenance: file.provenance,
        })
    }
}

fn product<S: Scalar>(dim: usize, gens: &[Poly<S>], pattern: &[u32]) -> Poly<S> {
    let mut p = Poly::one(dim);
    for (g, &e) in gens.iter().zip(pattern) {
        if e > 0 {
            p = &p * &g.pow(e);
        }
    }
    p
}

fn provenance(model: &FoliationModel, settings: &BasicRingSettings) -> Provenance {
    let mut p = Provenance { model: model.name().to_string(), kind: model.kind().to_string(), ..Provenance::default() };
    match model {
        FoliationModel::Isoparametric(m) => {
            p.engine = "tangency kernel".into();
            if settings.crosscheck {
                p.engine.push_str(" with Monte Carlo cross-check");
                p.samples = Some(m.params().samples);
                p.bandwidth = Some(m.params().bandwidth);
                p.workers = Some(m.params().workers);
            }
            p.seed = Some(settings.fit.seed);
        }
        _ if model.mode() == ScalarMode::Exact => p.engine = "exact".into(),
        _ => p.engine = "floating".into(),
    }
    if model.mode() == ScalarMode::Float || !model.is_exact_engine() {
        p.tol_rank = Some(settings.tol_rank);
        p.max_denominator = Some(settings.max_denominator);
    }
    p
}

/// Products of generators of total degree `d`, as coefficient rows.
fn product_rows(dim: usize, gens: &[(u32, FPoly)], d: u32, basis: &[crate::poly::ExponentVector]) -> Vec<Vec<f64>> {
    let degs: Vec<u32> = gens.iter().map(|g| g.0).collect();
    let polys: Vec<FPoly> = gens.iter().map(|g| g.1.clone()).collect();
    enumerate_products(&degs, d).iter().map(|pat| product(dim, &polys, pat).coefficients_in(basis)).collect()
}

/// Orthonormal rows spanning the unit-normalized rows of `y`.
fn orthonormal_span(y: &DMatrix<f64>, settings: &BasicRingSettings) -> (DMatrix<f64>, RankDecision) {
    let mut y = y.clone();
    for mut row in y.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let (sv, v) = svd_rows(&y);
    let decision = decide_rank(&sv, settings.tol_rank, settings.unstable_band);
    (v.rows(0, decision.rank).into_owned(), decision)
}

/// Generators of the basic ring up to degree `max_degree`.
///
/// At each degree `d` the products of earlier generators span a subspace
/// `P_d` of `B_d`; the rows of a reduced echelon basis of `B_d` that leave
/// `span(P_d)` become new generators. Exact models work in rational
/// arithmetic; floating models take the orthogonal complement of `P_d` in
/// `B_d`, put it in echelon form and rationalize when the coefficients
/// allow. The output for a smaller cap is a prefix of the output for a
/// larger one.
pub fn discover_generators(
    model: &FoliationModel,
    max_degree: u32,
    settings: &BasicRingSettings,
) -> Result<GeneratorSet, BasicRingError> {
    let dim = model.dim();
    let mut prov = provenance(model, settings);
    let mut warnings = Vec::new();
    let mut basic_dims = Vec::new();
    let mut found: Vec<Generator> = Vec::new();
    if model.is_exact_engine() && model.mode() == ScalarMode::Exact {
        let mut gens: Vec<QPoly> = Vec::new();
        for d in 1..=max_degree {
            let AveragedRows::Exact(rows) = averaged_rows(model, d)? else {
                unreachable!("exact models average exactly")
            };
            let basis = monomial_basis(dim, d);
            let (echelon, _) = rref(&rows, 0.0);
            basic_dims.push(echelon.len());
            let degs: Vec<u32> = found.iter().map(|g| g.degree).collect();
            let mut span = SpanBuilder::<Rational>::new(0.0);
            for pat in enumerate_products(&degs, d) {
                span.insert(&product(dim, &gens, &pat).coefficients_in(&basis));
            }
            for row in echelon {
                if span.insert(&row) {
                    let p = QPoly::from_coefficients(&basis, &row);
                    gens.push(p.clone());
                    found.push(Generator { degree: d, poly: Polynomial::Exact(p) });
                }
            }
            prov.rank_gaps.push(None);
        }
    } else {
        let mc = match model {
            FoliationModel::Isoparametric(m) if settings.crosscheck => Some(MonteCarloAverager::new(m, settings.fit.clone())?),
            _ => None,
        };
        let mut gens: Vec<(u32, FPoly)> = Vec::new();
        for d in 1..=max_degree {
            let sub = float_subspace(model, d, settings)?;
            basic_dims.push(sub.rank());
            prov.rank_gaps.push(sub.decision.gap);
            prov.crosschecks.push(match &mc {
                Some(mc) => {
                    let c = subspace::crosscheck(&sub, mc, d)?;
                    if !c.passed {
                        warnings.push(format!(
                            "degree {d}: Monte Carlo averages leave the tangency kernel (residual {:.3e}, tolerance {:.3e})",
                            c.image_residual.max(c.fixed_residual),
                            c.tolerance
                        ));
                    }
                    Some(c)
                }
                None => None,
            });
            for (p, exact) in new_float_generators(&sub, &gens, d, settings, &mut warnings) {
                gens.push((d, p.clone()));
                let poly = match exact {
                    Some(q) => Polynomial::Exact(q),
                    None => Polynomial::Float(p),
                };
                found.push(Generator { degree: d, poly });
            }
        }
    }
    if found.iter().any(|g| g.degree == max_degree) {
        warnings.push(format!(
            "new generators appeared at the degree cap {max_degree}; higher degrees may add more"
        ));
    }
    Ok(GeneratorSet { dim, degree_cap: max_degree, generators: found, basic_dims, warnings, provenance: prov })
}

/// Echelon rows of the complement of `span(P_d)` in `B_d`, with their
/// rationalizations when those are accepted.
fn new_float_generators(
    sub: &FloatSubspace,
    gens: &[(u32, FPoly)],
    d: u32,
    settings: &BasicRingSettings,
    warnings: &mut Vec<String>,
) -> Vec<(FPoly, Option<QPoly>)> {
    let frame = &sub.frame;
    let dim = frame.basis[0].dim();
    let py = frame.rows_to_y(&product_rows(dim, gens, d, &frame.basis));
    let (pq, pd) = orthonormal_span(&py, settings);
    let comp = &sub.q - (&sub.q * pq.transpose()) * &pq;
    let (csv, crows) = svd_rows(&comp);
    let cd = decide_rank(&csv, settings.tol_rank, settings.unstable_band);
    let expected = sub.rank().saturating_sub(pd.rank);
    if cd.rank != expected {
        warnings.push(format!(
            "degree {d}: complement rank {} differs from dim B_d - dim P_d = {expected}",
            cd.rank
        ));
    }
    let c_rows: Vec<Vec<f64>> = (0..cd.rank).map(|i| frame.y_to_c(crows.row(i).transpose().as_slice())).collect();
    let (echelon, _) = rref(&c_rows, 1e-9);
    echelon
        .iter()
        .map(|row| {
            let p = FPoly::from_coefficients(&frame.basis, row).pruned(1e-12);
            let r = rationalize(&p, settings.max_denominator);
            let accept = r.max_perturbation <= settings.rationalize_tol * p.max_abs_coeff().max(1.0);
            (p, accept.then_some(r.poly))
        })
        .collect()
}

/// Spanning check at one degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeGeneration {
    pub degree: u32,
    pub dim_basic: usize,
    pub dim_generated: usize,
    /// Largest relative sphere-L2 distance from an element of `B_d` to the
    /// span of generator products.
    pub max_residual: f64,
}

/// Check that a generator is itself basic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipCheck {
    pub index: usize,
    pub degree: u32,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationReport {
    pub model: String,
    /// `exact` or `floating`.
    pub regime: String,
    pub tolerance: f64,
    pub degrees: Vec<DegreeGeneration>,
    pub membership: Vec<MembershipCheck>,
    pub max_residual: f64,
    pub gap_degrees: Vec<u32>,
    pub passed: bool,
}

fn relative_residual(q: &DMatrix<f64>, y: &nalgebra::DVector<f64>) -> f64 {
    let n = y.norm();
    if n == 0.0 {
        return 0.0;
    }
    (y - q.transpose() * (q * y)).norm() / n
}

/// Spanning and membership checks of `gens` against `B_d`, `d <= max_degree`.
pub fn generation_report(
    model: &FoliationModel,
    gens: &GeneratorSet,
    max_degree: u32,
    settings: &BasicRingSettings,
) -> Result<GenerationReport, BasicRingError> {
    let dim = model.dim();
    if gens.dim != dim {
        return Err(ModelError::DimensionMismatch { expected: dim, found: gens.dim }.into());
    }
    let exact = model.is_exact_engine()
        && model.mode() == ScalarMode::Exact
        && gens.generators.iter().all(|g| g.poly.mode() == ScalarMode::Exact);
    let tolerance = if exact { 0.0 } else { settings.generation_tol };
    let fgens: Vec<(u32, FPoly)> = gens.generators.iter().map(|g| (g.degree, g.poly.to_float())).collect();
    let mut degrees = Vec::new();
    for d in 1..=max_degree {
        let frame = MetricFrame::new(dim, d);
        let prods = product_rows(dim, &fgens, d, &frame.basis);
        let (pq, _) = orthonormal_span(&frame.rows_to_y(&prods), settings);
        let entry = if exact {
            let AveragedRows::Exact(rows) = averaged_rows(model, d)? else {
                unreachable!("exact models average exactly")
            };
            let qgens: Vec<QPoly> = gens.generators.iter().map(|g| g.poly.as_exact().cloned()).collect::<Result<_, _>>()?;
            let mut span = SpanBuilder::<Rational>::new(0.0);
            for pat in enumerate_products(&gens.degrees(), d) {
                span.insert(&product(dim, &qgens, &pat).coefficients_in(&frame.basis));
            }
            let mut max_residual: f64 = 0.0;
            for row in &rows {
                if !span.contains(row) {
                    let y = frame.rows_to_y(&[row.iter().map(Scalar::to_f64).collect()]).row(0).transpose();
                    max_residual = max_residual.max(relative_residual(&pq, &y).max(f64::MIN_POSITIVE));
                }
            }
            DegreeGeneration { degree: d, dim_basic: rref(&rows, 0.0).0.len(), dim_generated: span.len(), max_residual }
        } else {
            let sub = float_subspace(model, d, settings)?;
            let max_residual = (0..sub.rank())
                .map(|i| relative_residual(&pq, &sub.q.row(i).transpose()))
                .fold(0.0, f64::max);
            DegreeGeneration { degree: d, dim_basic: sub.rank(), dim_generated: pq.nrows(), max_residual }
        };
        degrees.push(entry);
    }
    let mut membership = Vec::new();
    for (index, g) in gens.generators.iter().enumerate() {
        let residual = if model.is_exact_engine() {
            let p = match model.mode() {
                ScalarMode::Exact => g.poly.clone(),
                ScalarMode::Float => Polynomial::Float(g.poly.to_float()),
            };
            let avg = reynolds(model, &p)?;
            let diff = &avg.to_float() - &p.to_float();
            if exact {
                if avg == p { 0.0 } else { diff.max_abs_coeff().max(f64::MIN_POSITIVE) }
            } else {
                diff.max_abs_coeff() / p.to_float().max_abs_coeff().max(f64::MIN_POSITIVE)
            }
        } else {
            let sub = float_subspace(model, g.degree, settings)?;
            relative_residual(&sub.q, &sub.frame.poly_to_y(&g.poly.to_float()))
        };
        membership.push(MembershipCheck { index, degree: g.degree, residual, tolerance, passed: residual <= tolerance });
    }
    let max_residual = degrees.iter().map(|d| d.max_residual).fold(0.0, f64::max);
    let gap_degrees: Vec<u32> = degrees.iter().filter(|d| d.max_residual > tolerance).map(|d| d.degree).collect();
    let passed = gap_degrees.is_empty() && membership.iter().all(|m| m.passed);
    Ok(GenerationReport {
        model: model.name().to_string(),
        regime: if exact { "exact" } else { "floating" }.into(),
        tolerance,
        degrees,
        membership,
        max_residual,
        gap_degrees,
        passed,
    })
}

/// Like [`generation_report`], but a non-basic generator becomes
/// [`AveragingError::IdentityViolation`] and a spanning failure becomes
/// [`BasicRingError::GenerationGap`].
pub fn verify_generation(
    model: &FoliationModel,
    gens: &GeneratorSet,
    max_degree: u32,
    settings: &BasicRingSettings,
) -> Result<GenerationReport, BasicRingError> {
    let report = generation_report(model, gens, max_degree, settings)?;
    if let Some(m) = report.membership.iter().find(|m| !m.passed) {
        return Err(AveragingError::IdentityViolation {
            identity: format!("[rho_{0}] = rho_{0}", m.index + 1),
            residual: m.residual,
        }
        .into());
    }
    if !report.gap_degrees.is_empty() {
        return Err(BasicRingError::GenerationGap {
            degrees: report.gap_degrees.clone(),
            max_residual: report.max_residual,
        });
    }
    Ok(report)
}
