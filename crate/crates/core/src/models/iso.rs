use std::fmt;
use std::ops::Range;

use rand::Rng;
use num::Zero;
use serde::Serialize;

use super::torus::TorusModel;
use super::ModelError;
use crate::poly::{CompiledPoly, FPoly, Poly, QPoly, Rational, Scalar};
use crate::sphere::{sample_sphere_with, stream_rng};

/// Allowed deviation of `|p|` from 1 for points handed to the estimator.
pub const SPHERE_TOL: f64 = 1e-8;

/// `F = F0 + sqrt(k) * F1` with rational `F0`, `F1`; `surd` is `None` when `F` is rational.
#[derive(Debug, Clone, PartialEq)]
pub struct CartanPolynomial {
    pub rational: QPoly,
    pub surd: Option<(u32, QPoly)>,
}

impl CartanPolynomial {
    pub fn rational(f: QPoly) -> Self {
        CartanPolynomial { rational: f, surd: None }
    }

    pub fn with_surd(f0: QPoly, radicand: u32, f1: QPoly) -> Self {
        CartanPolynomial { rational: f0, surd: Some((radicand, f1)) }
    }

    pub fn dim(&self) -> usize {
        self.rational.dim()
    }

    pub fn to_float(&self) -> FPoly {
        let mut f = self.rational.to_float();
        if let Some((k, f1)) = &self.surd {
            f = &f + &f1.to_float().scale(&(*k as f64).sqrt());
        }
        f
    }

    fn parts(&self) -> Vec<&QPoly> {
        let mut v = vec![&self.rational];
        if let Some((_, f1)) = &self.surd {
            v.push(f1);
        }
        v
    }
}

impl fmt::Display for CartanPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.surd {
            None => write!(f, "{}", self.rational),
            Some((k, f1)) => write!(f, "{} + sqrt({k})*({})", self.rational, f1),
        }
    }
}

/// The constant `c = c0 + c1 * sqrt(radicand)` in `Delta F = c r^(g-2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MunznerConstant {
    pub c0: Rational,
    pub c1: Rational,
    pub radicand: u32,
}

impl MunznerConstant {
    pub fn value(&self) -> f64 {
        self.c0.to_f64() + self.c1.to_f64() * (self.radicand as f64).sqrt()
    }
}

impl fmt::Display for MunznerConstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c1.is_zero() {
            write!(f, "{}", self.c0.format_literal())
        } else {
            write!(f, "{} + {}*sqrt({})", self.c0.format_literal(), self.c1.format_literal(), self.radicand)
        }
    }
}

fn not_munzner(identity: &str, residual: impl fmt::Display) -> ModelError {
    ModelError::NotCartanMunzner { identity: identity.to_string(), residual: residual.to_string() }
}

/// Symbolic check of `|grad F|^2 = g^2 r^(2g-2)` and `Delta F = c r^(g-2)`.
/// With a surd part the first identity splits into
/// `|grad F0|^2 + k |grad F1|^2 = g^2 r^(2g-2)` and `<grad F0, grad F1> = 0`.
pub fn validate_munzner(f: &CartanPolynomial, g: u32) -> Result<MunznerConstant, ModelError> {
    if g == 0 {
        return Err(ModelError::InvalidModel("g must be at least 1".into()));
    }
    let dim = f.dim();
    for part in f.parts() {
        if part.dim() != dim {
            return Err(ModelError::DimensionMismatch { expected: dim, found: part.dim() });
        }
        if !part.is_zero() && (!part.is_homogeneous() || part.degree() != Some(g)) {
            return Err(ModelError::InvalidModel(format!("F is not homogeneous of degree {g}")));
        }
    }
    let r2 = QPoly::radius_squared(dim);
    let target = r2.pow(g - 1).scale(&Rational::from_i64((g * g) as i64));
    let f0 = &f.rational;
    let mut norm = f0.gradient_dot(f0);
    let radicand = f.surd.as_ref().map(|(k, _)| *k).unwrap_or(0);
    if let Some((k, f1)) = &f.surd {
        norm = &norm + &f1.gradient_dot(f1).scale(&Rational::from_i64(*k as i64));
        let cross = f0.gradient_dot(f1);
        if !cross.is_zero() {
            return Err(not_munzner("|grad F|^2 = g^2 r^(2g-2) (surd part)", cross.scale(&Rational::from_i64(2))));
        }
    }
    let residual = &norm - &target;
    if !residual.is_zero() {
        return Err(not_munzner("|grad F|^2 = g^2 r^(2g-2)", residual));
    }
    let laplace_constant = |p: &QPoly| -> Result<Rational, ModelError> {
        let lap = p.laplacian();
        if g >= 2 && g % 2 == 0 {
            let base = r2.pow((g - 2) / 2);
            let mut lead = vec![0u16; dim];
            lead[0] = (g - 2) as u16;
            let lead = crate::poly::ExponentVector::new(lead);
            let c = lap.coeff(&lead);
            let res = &lap - &base.scale(&c);
            if res.is_zero() {
                return Ok(c);
            }
            return Err(not_munzner("Delta F = c r^(g-2)", res));
        }
        if lap.is_zero() {
            Ok(Rational::from_i64(0))
        } else {
            Err(not_munzner("Delta F = c r^(g-2)", lap))
        }
    };
    let c0 = laplace_constant(f0)?;
    let c1 = match &f.surd {
        Some((_, f1)) => laplace_constant(f1)?,
        None => Rational::from_i64(0),
    };
    Ok(MunznerConstant { c0, c1, radicand })
}

/// Parameters of the level-set Monte Carlo estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorParams {
    /// Number of uniform sphere samples `N`.
    pub samples: usize,
    /// Epanechnikov bandwidth `h`.
    pub bandwidth: f64,
    /// Level tolerance of the same-leaf predicate.
    pub tol_level: f64,
    /// Minimum Kish effective sample size.
    pub min_ess: f64,
    /// Number of sampling streams; results depend on `(seed, workers)`.
    pub workers: usize,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams { samples: 1_000_000, bandwidth: 0.05, tol_level: 1e-6, min_ess: 100.0, workers: 8 }
    }
}

/// One leaf-average estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ess: f64,
    pub band_samples: usize,
}

/// Uniform sphere samples sorted by their `F` value, shared across queries.
#[derive(Debug, Clone)]
pub struct LevelSample {
    dim: usize,
    seed: u64,
    workers: usize,
    points: Vec<f64>,
    levels: Vec<f64>,
    speed: Vec<f64>,
}

impl LevelSample {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn level(&self, i: usize) -> f64 {
        self.levels[i]
    }

    /// Indices with `|F - t| < h`.
    pub fn band(&self, t: f64, h: f64) -> Range<usize> {
        let lo = self.levels.partition_point(|&v| v <= t - h);
        let hi = self.levels.partition_point(|&v| v < t + h);
        lo..hi.max(lo)
    }
}

/// Foliation of the sphere by the level sets of a Cartan–Münzner polynomial.
#[derive(Debug, Clone)]
pub struct IsoparametricModel {
    name: String,
    f: CartanPolynomial,
    g: u32,
    munzner: MunznerConstant,
    f_float: FPoly,
    compiled: CompiledPoly,
    gradient: Vec<CompiledPoly>,
    params: EstimatorParams,
    symmetry: Option<TorusModel>,
}

impl IsoparametricModel {
    pub fn new(f: CartanPolynomial, g: u32, params: EstimatorParams) -> Result<Self, ModelError> {
        let munzner = validate_munzner(&f, g)?;
        if !(params.bandwidth > 0.0 && params.bandwidth < 0.5) {
            return Err(ModelError::InvalidModel("bandwidth h must lie in (0, 0.5)".into()));
        }
        if params.samples == 0 || params.workers == 0 {
            return Err(ModelError::InvalidModel("N and workers must be positive".into()));
        }
        let f_float = f.to_float();
        let compiled = CompiledPoly::new(&f_float);
        let gradient = f_float.gradient().iter().map(CompiledPoly::new).collect();
        Ok(IsoparametricModel {
            name: String::new(),
            f,
            g,
            munzner,
            f_float,
            compiled,
            gradient,
            params,
            symmetry: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Attaches a leaf-transitive torus symmetry used to build same-leaf mates.
    /// `F` must be invariant under it.
    pub fn with_symmetry(mut self, torus: TorusModel) -> Result<Self, ModelError> {
        if torus.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: torus.dim() });
        }
        for part in self.f.parts() {
            if torus.reynolds_any_mode(part) != *part {
                return Err(ModelError::InvalidModel("F is not invariant under the configured symmetry".into()));
            }
        }
        self.symmetry = Some(torus);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn cartan(&self) -> &CartanPolynomial {
        &self.f
    }

    pub fn f_float(&self) -> &FPoly {
        &self.f_float
    }

    pub fn munzner_constant(&self) -> &MunznerConstant {
        &self.munzner
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn set_params(&mut self, params: EstimatorParams) {
        self.params = params;
    }

    pub fn symmetry(&self) -> Option<&TorusModel> {
        self.symmetry.as_ref()
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        self.compiled.eval(x)
    }

    fn check_point(&self, x: &[f64], tol: f64) -> Result<(), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let n = crate::sphere::norm(x);
        if (n - 1.0).abs() > tol {
            return Err(ModelError::OffSphere { norm: n });
        }
        Ok(())
    }

    pub fn same_leaf(&self, p: &[f64], q: &[f64], tol: f64) -> Result<bool, ModelError> {
        self.check_point(p, tol)?;
        self.check_point(q, tol)?;
        Ok((self.level(p) - self.level(q)).abs() < self.params.tol_level)
    }

    /// Draws the shared sample cloud: `workers` independent streams of
    /// `N / workers` points each (the remainder goes to the first streams).
    pub fn level_samples(&self, seed: u64) -> LevelSample {
        let (n, w, dim) = (self.params.samples, self.params.workers, self.dim());
        let chunks = crate::exec::map_range(w, |k| {
            let count = n / w + usize::from(k < n % w);
            let mut rng = stream_rng(seed, k as u64);
            let mut pts = Vec::with_capacity(count * dim);
            let mut lv = Vec::with_capacity(count);
            for _ in 0..count {
                let x = sample_sphere_with(dim, &mut rng);
                lv.push(self.compiled.eval(&x).clamp(-1.0, 1.0));
                pts.extend_from_slice(&x);
            }
            (pts, lv)
        });
        let mut all_pts = Vec::with_capacity(n * dim);
        let mut all_lv = Vec::with_capacity(n);
        for (p, l) in chunks {
            all_pts.extend(p);
            all_lv.extend(l);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| all_lv[a].total_cmp(&all_lv[b]));
        let g = self.g as f64;
        let mut points = Vec::with_capacity(n * dim);
        let mut levels = Vec::with_capacity(n);
        let mut speed = Vec::with_capacity(n);
        for i in order {
            points.extend_from_slice(&all_pts[i * dim..(i + 1) * dim]);
            let t = all_lv[i];
            levels.push(t);
            speed.push(g * (1.0 - t * t).max(0.0).sqrt());
        }
        LevelSample { dim, seed, workers: w, points, levels, speed }
    }

    /// Kernel-weighted leaf averages of `k` functions at `p`. `fill(x, out)`
    /// writes the `k` function values at the sample `x`.
    pub fn leaf_estimates<F>(&self, cloud: &LevelSample, p: &[f64], k: usize, fill: F) -> Result<Vec<Estimate>, ModelError>
    where
        F: Fn(&[f64], &mut [f64]),
    {
        self.check_point(p, SPHERE_TOL)?;
        let h = self.params.bandwidth;
        let t = self.level(p);
        if t.abs() >= 1.0 - h {
            return Err(ModelError::NearSingularLeaf { level: t, bandwidth: h });
        }
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut buf = vec![0.0; k];
        for i in cloud.band(t, h) {
            let u = (cloud.levels[i] - t) / h;
            let kern = 1.0 - u * u;
            if kern <= 0.0 {
                continue;
            }
            let w = cloud.speed[i] * kern;
            if w <= 0.0 {
                continue;
            }
            fill(cloud.point(i), &mut buf);
            weights.push(w);
            values.extend_from_slice(&buf);
        }
        let b: f64 = weights.iter().sum();
        let w2: f64 = weights.iter().map(|w| w * w).sum();
        let ess = if w2 > 0.0 { b * b / w2 } else { 0.0 };
        if ess < self.params.min_ess || ess < 2.0 {
            return Err(ModelError::EffectiveSampleTooSmall { ess, min_ess: self.params.min_ess });
        }
        let n = cloud.len() as f64;
        let band = weights.len();
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let a: f64 = weights.iter().enumerate().map(|(i, w)| w * values[i * k + j]).sum();
            let r = a / b;
            // delete-one deviations R_(i) - R; samples outside the band contribute 0
            let (mut s1, mut s2) = (0.0, 0.0);
            for (i, w) in weights.iter().enumerate() {
                let d = w * (r - values[i * k + j]) / (b - w);
                s1 += d;
                s2 += d * d;
            }
            let var = (n - 1.0) / n * (s2 - s1 * s1 / n);
            out.push(Estimate { estimate: r, std_error: var.max(0.0).sqrt(), ess, band_samples: band });
        }
        Ok(out)
    }

    /// Leaf average of one polynomial using a prepared sample cloud.
    pub fn leaf_average_in<S: Scalar>(&self, cloud: &LevelSample, f: &Poly<S>, p: &[f64]) -> Result<Estimate, ModelError> {
        if f.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: f.dim() });
        }
        let c = CompiledPoly::new(f);
        let est = self.leaf_estimates(cloud, p, 1, |x, out| out[0] = c.eval(x))?;
        Ok(est[0])
    }

    /// Leaf average of `f` at `p` from a fresh cloud drawn with `seed`.
    pub fn leaf_average_mc<S: Scalar>(&self, f: &Poly<S>, p: &[f64], seed: u64) -> Result<Estimate, ModelError> {
        self.check_point(p, SPHERE_TOL)?;
        let cloud = self.level_samples(seed);
        self.leaf_average_in(&cloud, f, p)
    }

    /// Tangential gradient of `F` on the sphere at `x`.
    pub fn sphere_gradient(&self, x: &[f64]) -> Vec<f64> {
        let grad: Vec<f64> = self.gradient.iter().map(|c| c.eval(x)).collect();
        let radial: f64 = grad.iter().zip(x).map(|(a, b)| a * b).sum();
        grad.iter().zip(x).map(|(a, b)| a - radial * b).collect()
    }

    /// Newton projection of a sphere point onto the level `F = t`.
    pub fn project_to_level(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        let mut y = x.to_vec();
        for _ in 0..100 {
            let r = self.level(&y) - t;
            if r.abs() < 1e-13 {
                return Some(y);
            }
            let gs = self.sphere_gradient(&y);
            let n2: f64 = gs.iter().map(|v| v * v).sum();
            if n2 < 1e-12 {
                return None;
            }
            for (a, b) in y.iter_mut().zip(&gs) {
                *a -= r * b / n2;
            }
            let n = crate::sphere::norm(&y);
            y.iter_mut().for_each(|a| *a /= n);
        }
        None
    }

    /// A point on the leaf of `p`: a random symmetry image when a symmetry is
    /// configured, otherwise a random sphere point projected onto `F = F(p)`.
    pub fn random_mate<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Option<Vec<f64>> {
        if let Some(torus) = &self.symmetry {
            return Some(torus.random_mate(p, rng));
        }
        let t = self.level(p);
        (0..32).find_map(|_| self.project_to_level(&sample_sphere_with(self.dim(), rng), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;

    fn q(s: &str, d: usize) -> QPoly {
        parse_poly(s, d).unwrap()
    }

    fn g2() -> CartanPolynomial {
        CartanPolynomial::rational(q("x1^2 + x2^2 - x3^2 - x4^2", 4))
    }

    #[test]
    fn munzner_examples() {
        let c = validate_munzner(&CartanPolynomial::rational(q("x1", 3)), 1).unwrap();
        assert_eq!(c.value(), 0.0);
        let c = validate_munzner(&g2(), 2).unwrap();
        assert_eq!(c.value(), 0.0);
        let err = validate_munzner(&CartanPolynomial::rational(q("x1^2", 4)), 2).unwrap_err();
        match err {
            ModelError::NotCartanMunzner { residual, .. } => assert_eq!(residual, "-4*x2^2 - 4*x3^2 - 4*x4^2"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn munzner_constant_nonzero() {
        // x1^2 - x2^2 - x3^2 on R^3 (m1 = 1, m2 = 0 focal dimensions)
        let f = CartanPolynomial::rational(q("x1^2 - x2^2 - x3^2", 3));
        let c = validate_munzner(&f, 2).unwrap();
        assert_eq!(c.c0, Rational::from_i64(-2));
    }

    #[test]
    fn cartan_g3_candidate() {
        let f0 = q("3*x1^2*x2 - x2^3 + 3*x2*x3^2 - 3/2*x2*x4^2 - 3/2*x2*x5^2", 5);
        let f1 = q("3/2*x1*x4^2 - 3/2*x1*x5^2 + 3*x3*x4*x5", 5);
        let c = validate_munzner(&CartanPolynomial::with_surd(f0.clone(), 3, f1.clone()), 3).unwrap();
        assert_eq!(c.value(), 0.0);
        // the wrong radicand breaks the gradient identity
        assert!(validate_munzner(&CartanPolynomial::with_surd(f0, 2, f1), 3).is_err());
    }

    fn small_model(n: usize) -> IsoparametricModel {
        let params = EstimatorParams { samples: n, ..EstimatorParams::default() };
        IsoparametricModel::new(g2(), 2, params).unwrap()
    }

    #[test]
    fn estimator_constant_and_oracle() {
        let m = small_model(200_000);
        let cloud = m.level_samples(7);
        let p = [0.8, 0.0, 0.6, 0.0];
        let one = m.leaf_average_in(&cloud, &q("1", 4), &p).unwrap();
        assert_eq!(one.estimate, 1.0);
        let t = m.level(&p);
        let est = m.leaf_average_in(&cloud, &q("x1^2", 4), &p).unwrap();
        let exact = (1.0 + t) / 4.0;
        assert!((est.estimate - exact).abs() < 3.0 * est.std_error + 1e-4, "{est:?} vs {exact}");
    }

    #[test]
    fn estimator_rejects_bad_points() {
        let m = small_model(20_000);
        let cloud = m.level_samples(1);
        let f = q("x1^2", 4);
        assert!(matches!(m.leaf_average_in(&cloud, &f, &[1.0, 0.0, 0.0, 0.0]), Err(ModelError::NearSingularLeaf { .. })));
        assert!(matches!(m.leaf_average_in(&cloud, &f, &[2.0, 0.0, 0.0, 0.0]), Err(ModelError::OffSphere { .. })));
        let tiny = IsoparametricModel::new(g2(), 2, EstimatorParams { samples: 50, ..EstimatorParams::default() }).unwrap();
        let c = tiny.level_samples(1);
        assert!(matches!(
            tiny.leaf_average_in(&c, &f, &[0.8, 0.0, 0.6, 0.0]),
            Err(ModelError::EffectiveSampleTooSmall { .. })
        ));
    }

    #[test]
    fn cloud_is_deterministic() {
        let m = small_model(10_000);
        let (a, b) = (m.level_samples(3), m.level_samples(3));
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, m.level_samples(4).points);
    }

    #[test]
    fn mates_share_the_level() {
        let m = small_model(1000);
        let mut rng = stream_rng(2, 0);
        let p = [0.8, 0.0, 0.6, 0.0];
        for _ in 0..10 {
            let mate = m.random_mate(&p, &mut rng).unwrap();
            assert!(m.same_leaf(&p, &mate, 1e-9).unwrap());
        }
        assert!(m.same_leaf(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 1e-9).unwrap());
        assert!(m.same_leaf(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 1e-9).is_err());
    }
}
