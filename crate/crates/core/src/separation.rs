//! The map `rho = (rho_1, ..., rho_k)` built from basic generators, and
//! sampled evidence that its fibers are exactly the leaves of the cone
//! foliation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::basic_ring::GeneratorSet;
use crate::models::{FoliationModel, ModelError};
use crate::poly::CompiledPoly;
use crate::sphere::{distance, norm, sample_sphere_with, stream_rng};

/// Stream offsets of the three pair families; pair `i` uses offset `+ i`.
pub const SAME_STREAM: u64 = 1 << 42;
pub const DISTINCT_STREAM: u64 = 2 << 42;
pub const FIBER_STREAM: u64 = 3 << 42;
pub const EXPORT_STREAM: u64 = 4 << 42;

/// Radii of sampled cone points lie in `[RADIUS_MIN, RADIUS_MAX]`.
const RADIUS_MIN: f64 = 0.5;
const RADIUS_MAX: f64 = 1.5;
/// Rejection attempts per requested distinct pair.
const MAX_ATTEMPTS_PER_PAIR: usize = 100;
/// A converged fiber search counts as a counterexample only if it lands at
/// least this far (leaf distance proxy) from the starting leaf.
pub const FIBER_SEPARATION: f64 = 1e-3;
const FIBER_ITERATIONS: usize = 200;
const FIBER_CONVERGED: f64 = 1e-10;
/// Recorded counterexamples are capped; the count is always exact.
const MAX_RECORDED_FAILURES: usize = 20;
/// Leaf-distance proxy bin edges.
const BIN_EDGES: [f64; 3] = [1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeparationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("generator dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("num_pairs must be at least 1")]
    NoPairs,
    #[error("found only {found} distinct-leaf pairs out of {requested} after {attempts} attempts")]
    InsufficientDistinctPairs { found: usize, requested: usize, attempts: usize },
}

/// Evaluates `rho` at many points.
pub struct RhoMap {
    gens: Vec<CompiledPoly>,
    gradients: Vec<Vec<CompiledPoly>>,
    dim: usize,
}

impl RhoMap {
    pub fn new(gens: &GeneratorSet) -> Self {
        let polys = gens.float_polys();
        RhoMap {
            gens: polys.iter().map(CompiledPoly::new).collect(),
            gradients: polys.iter().map(|p| p.gradient().iter().map(CompiledPoly::new).collect()).collect(),
            dim: gens.dim,
        }
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.gens.iter().map(|g| g.eval(x)).collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.gens.len(), self.dim, |i, j| self.gradients[i][j].eval(x))
    }
}

/// `(rho_1(x), ..., rho_k(x))`.
pub fn rho_eval(gens: &GeneratorSet, x: &[f64]) -> Result<Vec<f64>, SeparationError> {
    if x.len() != gens.dim {
        return Err(SeparationError::DimensionMismatch { expected: gens.dim, found: x.len() });
    }
    Ok(RhoMap::new(gens).eval(x))
}

/// Same-leaf predicate of the cone foliation: equal radii and the same
/// sphere leaf after normalization.
pub fn cone_same_leaf(model: &FoliationModel, p: &[f64], q: &[f64], tol: f64) -> Result<bool, ModelError> {
    let (np, nq) = (norm(p), norm(q));
    if (np - nq).abs() >= tol {
        return Ok(false);
    }
    if np < tol {
        return Ok(true);
    }
    model.same_leaf(&unit(p, np), &unit(q, nq), tol)
}

/// Cheap upper-bound-style proxy for the distance between the cone leaves
/// through `p` and `q`: radial gap plus a model-specific sphere term.
pub fn leaf_distance_proxy(model: &FoliationModel, p: &[f64], q: &[f64]) -> f64 {
    let (np, nq) = (norm(p), norm(q));
    if np == 0.0 || nq == 0.0 {
        return (np - nq).abs();
    }
    let (u, v) = (unit(p, np), unit(q, nq));
    let sphere = match model {
        FoliationModel::FiniteGroup(m) => m.orbit_distance(&u, &v),
        FoliationModel::FiniteGroupFloat(m) => m.orbit_distance(&u, &v),
        FoliationModel::Torus(m) => m.orbit_distance(&u, &v),
        FoliationModel::Isoparametric(m) => (m.level(&u) - m.level(&v)).abs() / m.g() as f64,
    };
    (np - nq).abs() + sphere
}

fn unit(x: &[f64], n: f64) -> Vec<f64> {
    x.iter().map(|v| v / n).collect()
}

fn cone_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let r = rng.random_range(RADIUS_MIN..=RADIUS_MAX);
    sample_sphere_with(dim, rng).into_iter().map(|v| v * r).collect()
}

/// A pair whose `rho` values contradict the same-leaf predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    /// `same leaf, rho differs`, `distinct leaves, rho equal` or `fiber search`.
    pub kind: String,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub rho_p: Vec<f64>,
    pub rho_q: Vec<f64>,
    pub rho_distance: f64,
    pub leaf_distance_proxy: f64,
}

/// Distinct-leaf pairs grouped by leaf distance proxy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginBin {
    pub proxy_min: f64,
    pub proxy_max: Option<f64>,
    pub pairs: usize,
    pub min_rho_distance: Option<f64>,
    pub margin_ratio: Option<f64>,
}

/// Margin over distinct pairs whose leaf distance proxy is at least `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginAtTolerance {
    pub tolerance: f64,
    pub pairs: usize,
    pub margin_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationCertificate {
    pub generator_set: String,
    pub model: String,
    pub seed: u64,
    pub num_pairs: usize,
    pub tol_same: f64,
    pub margin_min: f64,
    pub mate_construction: String,
    pub num_same_pairs: usize,
    pub skipped_same_pairs: usize,
    pub max_same_discrepancy: f64,
    pub num_distinct_pairs: usize,
    /// Basis-vector pairs `(e_i, e_j)` on distinct leaves, included in the count above.
    pub probe_pairs: usize,
    pub min_distinct_distance: f64,
    /// `min_distinct_distance / max(max_same_discrepancy, machine epsilon)`.
    pub margin_ratio: f64,
    pub fiber_searches: usize,
    pub fiber_converged: usize,
    pub bins: Vec<MarginBin>,
    pub margin_by_tolerance: Vec<MarginAtTolerance>,
    pub num_failures: usize,
    pub failures: Vec<Counterexample>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl SeparationCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationSettings {
    pub num_pairs: usize,
    pub tol_same: f64,
    pub seed: u64,
    pub margin_min: f64,
    /// Random fiber searches in addition to one per basis vector.
    pub fiber_searches: usize,
}

impl Default for SeparationSettings {
    fn default() -> Self {
        SeparationSettings { num_pairs: 1000, tol_same: 1e-8, seed: 0, margin_min: 10.0, fiber_searches: 100 }
    }
}

struct Pair {
    p: Vec<f64>,
    q: Vec<f64>,
}

/// Gauss-Newton from `start` towards the fiber `rho = target`, minimum-norm steps.
fn fiber_search(rho: &RhoMap, target: &[f64], start: Vec<f64>) -> (Vec<f64>, f64) {
    let resid = |x: &[f64]| -> DVector<f64> {
        DVector::from_iterator(target.len(), rho.eval(x).iter().zip(target).map(|(a, b)| a - b))
    };
    let scale = target.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut x = start;
    let mut r = resid(&x);
    for _ in 0..FIBER_ITERATIONS {
        if r.norm() <= 1e-14 * scale {
            break;
        }
        let Ok(pinv) = rho.jacobian(&x).pseudo_inverse(1e-12) else { break };
        let step = pinv * &r;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let rt = resid(&trial);
            if rt.norm() < r.norm() {
                x = trial;
                r = rt;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, r.norm() / scale)
}

/// Sampled certificate that same-leaf pairs share `rho` values and
/// distinct-leaf pairs do not. Pairs live on the cone over the sphere.
///
/// Same-leaf pairs are a point and a random leaf-mate at the same radius.
/// Distinct-leaf pairs are basis-vector probes `(e_i, e_j)` followed by
/// rejection-sampled pairs. Fiber searches from random starts solve `rho(q) = rho(p)` for `p` a basis vector or a
/// random point; a solution on a far leaf is a counterexample. Failures are recorded, not raised.
pub fn separation_test(
    model: &FoliationModel,
    gens: &GeneratorSet,
    settings: &SeparationSettings,
) -> Result<SeparationCertificate, SeparationError> {
    let n = model.dim();
    if gens.dim != n {
        return Err(SeparationError::DimensionMismatch { expected: n, found: gens.dim });
    }
    if settings.num_pairs == 0 {
        return Err(SeparationError::NoPairs);
    }
    let rho = RhoMap::new(gens);
    let tol = settings.tol_same;
    let seed = settings.seed;
    let mut notes = Vec::new();

    // same-leaf pairs
    let same: Vec<Option<Pair>> = crate::exec::map_range(settings.num_pairs, |i| {
        let mut rng = stream_rng(seed, SAME_STREAM + i as u64);
        let r = rng.random_range(RADIUS_MIN..=RADIUS_MAX);
        let u = sample_sphere_with(n, &mut rng);
        let v = model.random_mate(&u, &mut rng)?;
        Some(Pair { p: u.iter().map(|a| a * r).collect(), q: v.iter().map(|a| a * r).collect() })
    });
    let skipped = same.iter().filter(|p| p.is_none()).count();
    if skipped > 0 {
        notes.push(format!("{skipped} same-leaf pairs skipped: no leaf-mate construction"));
    }
    let same: Vec<Pair> = same.into_iter().flatten().collect();

    // distinct-leaf pairs: basis probes, then rejection sampling
    let basis = |i: usize| -> Vec<f64> { (0..n).map(|j| f64::from(u8::from(i == j))).collect() };
    let mut distinct: Vec<Pair> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if distinct.len() < settings.num_pairs && !cone_same_leaf(model, &basis(i), &basis(j), tol)? {
                distinct.push(Pair { p: basis(i), q: basis(j) });
            }
        }
    }
    let probe_pairs = distinct.len();
    let wanted = settings.num_pairs - probe_pairs;
    let sampled: Vec<Result<Option<Pair>, ModelError>> = crate::exec::map_range(wanted, |i| {
        let mut rng = stream_rng(seed, DISTINCT_STREAM + i as u64);
        for _ in 0..MAX_ATTEMPTS_PER_PAIR {
            let p = cone_point(n, &mut rng);
            let q = cone_point(n, &mut rng);
            if !cone_same_leaf(model, &p, &q, tol)? {
                return Ok(Some(Pair { p, q }));
            }
        }
        Ok(None)
    });
    let mut found = probe_pairs;
    for s in sampled {
        if let Some(pair) = s? {
            distinct.push(pair);
            found += 1;
        }
    }
    if found < settings.num_pairs {
        return Err(SeparationError::InsufficientDistinctPairs {
            found,
            requested: settings.num_pairs,
            attempts: wanted * MAX_ATTEMPTS_PER_PAIR,
        });
    }

    let mut failures = Vec::new();
    let mut num_failures = 0;
    let mut record = |c: Counterexample, failures: &mut Vec<Counterexample>| {
        num_failures += 1;
        if failures.len() < MAX_RECORDED_FAILURES {
            failures.push(c);
        }
    };
    let example = |kind: &str, pair: &Pair, rp: Vec<f64>, rq: Vec<f64>| Counterexample {
        kind: kind.to_string(),
        rho_distance: distance(&rp, &rq),
        leaf_distance_proxy: leaf_distance_proxy(model, &pair.p, &pair.q),
        p: pair.p.clone(),
        q: pair.q.clone(),
        rho_p: rp,
        rho_q: rq,
    };

    let mut max_same: f64 = 0.0;
    for pair in &same {
        let (rp, rq) = (rho.eval(&pair.p), rho.eval(&pair.q));
        let d = distance(&rp, &rq);
        max_same = max_same.max(d);
        if d > tol {
            record(example("same leaf, rho differs", pair, rp, rq), &mut failures);
        }
    }
    let mut distances = Vec::with_capacity(distinct.len());
    for pair in &distinct {
        let (rp, rq) = (rho.eval(&pair.p), rho.eval(&pair.q));
        let d = distance(&rp, &rq);
        distances.push((leaf_distance_proxy(model, &pair.p, &pair.q), d));
        if d <= tol {
            record(example("distinct leaves, rho equal", pair, rp, rq), &mut failures);
        }
    }

    // fiber searches
    let starts: Vec<Vec<f64>> = (0..n)
        .map(basis)
        .chain((0..settings.fiber_searches).map(|i| cone_point(n, &mut stream_rng(seed, FIBER_STREAM + i as u64))))
        .collect();
    let searches: Vec<Result<(Pair, f64, bool), ModelError>> = crate::exec::map_slice(&starts, |p| {
        let index = starts.iter().position(|s| s == p).unwrap_or(0) as u64;
        let start = cone_point(n, &mut stream_rng(seed, FIBER_STREAM + (1 << 32) + index));
        let (q, residual) = fiber_search(&rho, &rho.eval(p), start);
        let converged = residual <= FIBER_CONVERGED;
        let far = converged && leaf_distance_proxy(model, p, &q) > FIBER_SEPARATION && !cone_same_leaf(model, p, &q, tol)?;
        Ok((Pair { p: p.clone(), q }, residual, far))
    });
    let mut fiber_converged = 0;
    for s in searches {
        let (pair, residual, far) = s?;
        if residual <= FIBER_CONVERGED {
            fiber_converged += 1;
        }
        if far {
            let (rp, rq) = (rho.eval(&pair.p), rho.eval(&pair.q));
            record(example("fiber search: equal rho on a distinct leaf", &pair, rp, rq), &mut failures);
        }
    }

    let floor = f64::EPSILON;
    let min_distinct = distances.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let margin = |pairs: &mut dyn Iterator<Item = f64>| -> (usize, Option<f64>, Option<f64>) {
        let (mut count, mut min) = (0, f64::INFINITY);
        for d in pairs {
            count += 1;
            min = min.min(d);
        }
        if count == 0 {
            (0, None, None)
        } else {
            (count, Some(min), Some(min / max_same.max(floor)))
        }
    };
    let mut bins = Vec::new();
    let mut lower = 0.0;
    for upper in BIN_EDGES.iter().map(|&e| Some(e)).chain(std::iter::once(None)) {
        let (pairs, min_rho_distance, margin_ratio) = margin(
            &mut distances.iter().filter(|d| d.0 >= lower && upper.is_none_or(|u| d.0 < u)).map(|d| d.1),
        );
        bins.push(MarginBin { proxy_min: lower, proxy_max: upper, pairs, min_rho_distance, margin_ratio });
        lower = upper.unwrap_or(f64::INFINITY);
    }
    let margin_by_tolerance = [tol, tol * 1e2, tol * 1e4, tol * 1e6]
        .iter()
        .map(|&t| {
            let (pairs, _, margin_ratio) = margin(&mut distances.iter().filter(|d| d.0 >= t).map(|d| d.1));
            MarginAtTolerance { tolerance: t, pairs, margin_ratio }
        })
        .collect();
    let margin_ratio = min_distinct / max_same.max(floor);
    let passed = num_failures == 0 && margin_ratio > settings.margin_min;
    Ok(SeparationCertificate {
        generator_set: generator_set_id(gens),
        model: model.name().to_string(),
        seed,
        num_pairs: settings.num_pairs,
        tol_same: tol,
        margin_min: settings.margin_min,
        mate_construction: model.mate_construction().to_string(),
        num_same_pairs: same.len(),
        skipped_same_pairs: skipped,
        max_same_discrepancy: max_same,
        num_distinct_pairs: distinct.len(),
        probe_pairs,
        min_distinct_distance: min_distinct,
        margin_ratio,
        fiber_searches: starts.len(),
        fiber_converged,
        bins,
        margin_by_tolerance,
        num_failures,
        failures,
        notes,
        passed,
    })
}

/// Human-readable identifier of a generator set.
pub fn generator_set_id(gens: &GeneratorSet) -> String {
    let source = if gens.provenance.model.is_empty() { "user" } else { gens.provenance.model.as_str() };
    format!("{source}: {} generators of degrees {:?}", gens.len(), gens.degrees())
}

/// Samples of the image `rho(S^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl QuotientTable {
    /// Header row, then one row per sample; values in shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `num_samples` uniform sphere points with their `rho` images and, when a
/// model is given, its leaf labels. Columns: `x1..xn, rho1..rhok, labels`.
pub fn quotient_image_export(
    gens: &GeneratorSet,
    model: Option<&FoliationModel>,
    num_samples: usize,
    seed: u64,
) -> Result<QuotientTable, SeparationError> {
    let n = gens.dim;
    if let Some(m) = model {
        if m.dim() != n {
            return Err(SeparationError::DimensionMismatch { expected: m.dim(), found: n });
        }
    }
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=gens.len()).map(|i| format!("rho{i}")));
    if let Some(m) = model {
        header.extend(m.label_names());
    }
    let rho = RhoMap::new(gens);
    let rows = crate::exec::map_range(num_samples, |i| {
        let x = sample_sphere_with(n, &mut stream_rng(seed, EXPORT_STREAM + i as u64));
        let mut row = x.clone();
        row.extend(rho.eval(&x));
        if let Some(m) = model {
            row.extend(m.leaf_labels(&x));
        }
        row
    });
    Ok(QuotientTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic_ring::{discover_generators, BasicRingSettings};
    use crate::models::{group_closure, signed_permutation, TorusModel};
    use crate::poly::{Polynomial, Rational, ScalarMode};

    fn t2() -> FoliationModel {
        FoliationModel::Torus(TorusModel::new(vec![vec![1, 0], vec![0, 1]], 0, ScalarMode::Exact).unwrap())
    }

    fn hopf() -> FoliationModel {
        FoliationModel::Torus(TorusModel::new(vec![vec![1], vec![1]], 0, ScalarMode::Exact).unwrap())
    }

    fn gens(texts: &[&str]) -> GeneratorSet {
        let polys = texts.iter().map(|t| Polynomial::parse(t, 4, ScalarMode::Exact).unwrap()).collect();
        GeneratorSet::from_polys(4, polys, 2).unwrap()
    }

    const HOPF: [&str; 4] = ["x1^2 + x2^2", "x3^2 + x4^2", "x1*x3 + x2*x4", "x1*x4 - x2*x3"];

    fn settings(num_pairs: usize) -> SeparationSettings {
        SeparationSettings { num_pairs, ..SeparationSettings::default() }
    }

    #[test]
    fn rho_values() {
        let g = gens(&HOPF);
        assert_eq!(rho_eval(&g, &[1.0, 0.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rho_eval(&g, &[0.0; 4]).unwrap(), [0.0; 4]);
        let x = [0.3, -0.2, 0.7, 0.1];
        let r = 1.7;
        let scaled: Vec<f64> = x.iter().map(|v| v * r).collect();
        for (a, b) in rho_eval(&g, &scaled).unwrap().iter().zip(rho_eval(&g, &x).unwrap()) {
            assert!((a - r * r * b).abs() < 1e-14);
        }
    }

    #[test]
    fn hopf_passes_and_is_sensitive() {
        let c = separation_test(&hopf(), &gens(&HOPF), &settings(1000)).unwrap();
        assert!(c.passed, "{}", c.to_json());
        assert!(c.max_same_discrepancy < 1e-14);
        for drop in 0..4 {
            let texts: Vec<&str> = HOPF.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, t)| *t).collect();
            let c = separation_test(&hopf(), &gens(&texts), &settings(200)).unwrap();
            assert!(!c.passed, "dropping {drop} still passes");
        }
    }

    #[test]
    fn radius_alone_fails_on_torus() {
        let c = separation_test(&t2(), &gens(&["x1^2 + x2^2 + x3^2 + x4^2"]), &settings(100)).unwrap();
        assert!(!c.passed);
        let first = &c.failures[0];
        assert_eq!(first.kind, "distinct leaves, rho equal");
        assert_eq!(first.p, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(first.q, [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn antipodal_group() {
        let m = FoliationModel::FiniteGroup(
            group_closure(vec![signed_permutation::<Rational>(&[0, 1, 2], &[-1, -1, -1])], 4).unwrap(),
        );
        let g = discover_generators(&m, 2, &BasicRingSettings::default()).unwrap();
        assert_eq!(g.len(), 6);
        assert!(separation_test(&m, &g, &settings(500)).unwrap().passed);
    }

    #[test]
    fn export_tables() {
        let g = gens(&HOPF);
        let t = quotient_image_export(&g, Some(&hopf()), 200, 3).unwrap();
        assert_eq!(t.header, ["x1", "x2", "x3", "x4", "rho1", "rho2", "rho3", "rho4", "radius2_1", "radius2_2"]);
        for row in &t.rows {
            assert!((row[4] + row[5] - 1.0).abs() < 1e-10);
            assert!((row[6].powi(2) + row[7].powi(2) - row[4] * row[5]).abs() < 1e-10);
        }
        let empty = quotient_image_export(&g, None, 0, 3).unwrap();
        assert_eq!(empty.to_csv(), "x1,x2,x3,x4,rho1,rho2,rho3,rho4\n");
        assert_eq!(t, quotient_image_export(&g, Some(&hopf()), 200, 3).unwrap());
    }
}
