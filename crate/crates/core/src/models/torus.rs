use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector};
use num::complex::Complex;
use num::{One, Zero};
use rand::Rng;

use super::ModelError;
use crate::poly::{binomial, ExponentVector, Poly, QPoly, Rational, Scalar, ScalarMode};

type CQ = Complex<Rational>;

/// Linear torus action on `C^m x R^n_fix`. Coordinates are ordered as the
/// planes `(x1,x2), (x3,x4), ...` followed by the fixed coordinates; plane `k`
/// is rotated by the angle `sum_j W[k][j] * theta_j`.
#[derive(Debug)]
pub struct TorusModel {
    name: String,
    planes: usize,
    n_fix: usize,
    weights: Vec<Vec<i64>>,
    mode: ScalarMode,
    cache: RwLock<HashMap<ExponentVector, QPoly>>,
}

impl Clone for TorusModel {
    fn clone(&self) -> Self {
        TorusModel {
            name: self.name.clone(),
            planes: self.planes,
            n_fix: self.n_fix,
            weights: self.weights.clone(),
            mode: self.mode,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl TorusModel {
    pub fn new(weights: Vec<Vec<i64>>, n_fix: usize, mode: ScalarMode) -> Result<Self, ModelError> {
        let t = weights.first().map(|r| r.len()).unwrap_or(0);
        if weights.iter().any(|r| r.len() != t) {
            return Err(ModelError::InvalidModel("weight_matrix rows have unequal length".into()));
        }
        if weights.is_empty() && n_fix == 0 {
            return Err(ModelError::InvalidModel("torus model has no coordinates".into()));
        }
        Ok(TorusModel {
            name: String::new(),
            planes: weights.len(),
            n_fix,
            weights,
            mode,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        2 * self.planes + self.n_fix
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn n_fix(&self) -> usize {
        self.n_fix
    }

    pub fn torus_rank(&self) -> usize {
        self.weights.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    pub fn mode(&self) -> ScalarMode {
        self.mode
    }

    /// Exact orbit average of a real monomial.
    pub fn monomial_average(&self, e: &ExponentVector) -> QPoly {
        if let Some(p) = self.cache.read().expect("cache poisoned").get(e) {
            return p.clone();
        }
        let avg = self.compute_monomial_average(e);
        self.cache.write().expect("cache poisoned").insert(e.clone(), avg.clone());
        avg
    }

    fn compute_monomial_average(&self, e: &ExponentVector) -> QPoly {
        let dim = self.dim();
        let ex = e.as_slice();
        // per plane: total degree and the list (a_k, coefficient of z^a zbar^b)
        let per_plane: Vec<(u32, Vec<(u32, CQ)>)> =
            (0..self.planes).map(|k| (ex[2 * k] as u32 + ex[2 * k + 1] as u32, plane_expansion(ex[2 * k], ex[2 * k + 1]))).collect();
        let mut out = QPoly::zero(dim);
        let mut idx = vec![0usize; self.planes];
        loop {
            let a: Vec<u32> = (0..self.planes).map(|k| per_plane[k].1[idx[k]].0).collect();
            let balanced = (0..self.torus_rank()).all(|j| {
                (0..self.planes).map(|k| self.weights[k][j] * (2 * a[k] as i64 - per_plane[k].0 as i64)).sum::<i64>() == 0
            });
            if balanced {
                let mut coeff = CQ::one();
                for k in 0..self.planes {
                    coeff *= per_plane[k].1[idx[k]].1.clone();
                }
                out = &out + &self.realify(&a, &per_plane, coeff, ex);
            }
            // odometer over the per-plane choices
            let mut k = 0;
            loop {
                if k == self.planes {
                    return out;
                }
                idx[k] += 1;
                if idx[k] < per_plane[k].1.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Real part of `coeff * prod_k z_k^a_k zbar_k^b_k * x_fix^e_fix`.
    fn realify(&self, a: &[u32], per_plane: &[(u32, Vec<(u32, CQ)>)], coeff: CQ, ex: &[u16]) -> QPoly {
        let dim = self.dim();
        let mut acc: BTreeMap<Vec<u16>, CQ> = BTreeMap::new();
        let mut fixed = vec![0u16; dim];
        for j in 0..self.n_fix {
            fixed[2 * self.planes + j] = ex[2 * self.planes + j];
        }
        acc.insert(fixed, coeff);
        for k in 0..self.planes {
            let b = per_plane[k].0 - a[k];
            let factor = zzbar_in_xy(a[k], b);
            let mut next = BTreeMap::new();
            for (e, c) in &acc {
                for ((px, py), d) in &factor {
                    let mut e2 = e.clone();
                    e2[2 * k] = *px;
                    e2[2 * k + 1] = *py;
                    let slot = next.entry(e2).or_insert_with(CQ::zero);
                    *slot += c.clone() * d.clone();
                }
            }
            acc = next;
        }
        let mut out = QPoly::zero(dim);
        for (e, c) in acc {
            out.add_term(ExponentVector::new(e), c.re);
        }
        out
    }

    /// Reynolds operator over the torus.
    pub fn reynolds<S: Scalar>(&self, f: &Poly<S>) -> Result<Poly<S>, ModelError> {
        if f.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: f.dim() });
        }
        if S::MODE != self.mode {
            return Err(ModelError::ModeMismatch { expected: self.mode, found: S::MODE });
        }
        Ok(self.reynolds_any_mode(f))
    }

    /// Reynolds operator without the mode check; the averaging projection has
    /// rational coefficients in the monomial basis so both modes are exact up
    /// to the coefficient field.
    pub fn reynolds_any_mode<S: Scalar>(&self, f: &Poly<S>) -> Poly<S> {
        let mut out = Poly::zero(self.dim());
        for (e, c) in f.terms() {
            let avg: Poly<S> = self.monomial_average(e).map_coefficients(S::from_rational);
            out = &out + &avg.scale(c);
        }
        out
    }

    /// Rotation angle of each plane for torus parameters `theta`.
    pub fn plane_angles(&self, theta: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|row| row.iter().zip(theta).map(|(&w, t)| w as f64 * t).sum()).collect()
    }

    pub fn act(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (k, phi) in self.plane_angles(theta).into_iter().enumerate() {
            let (s, c) = phi.sin_cos();
            let (a, b) = (x[2 * k], x[2 * k + 1]);
            y[2 * k] = c * a - s * b;
            y[2 * k + 1] = s * a + c * b;
        }
        y
    }

    pub fn random_mate<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Vec<f64> {
        let theta: Vec<f64> = (0..self.torus_rank()).map(|_| rng.random::<f64>() * TAU).collect();
        self.act(&theta, p)
    }

    /// Distance from `q` to the orbit of `p`: a phase grid followed by
    /// coordinate refinement. Accurate to roundoff once the grid lands in
    /// the right basin.
    pub fn orbit_distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let t = self.torus_rank();
        let dist = |theta: &[f64]| crate::sphere::distance(&self.act(theta, p), q);
        if t == 0 {
            return dist(&[]);
        }
        let per_dim = ((1024f64).powf(1.0 / t as f64) as usize).max(4);
        let step0 = TAU / per_dim as f64;
        let mut best = vec![0.0; t];
        let mut best_d = f64::INFINITY;
        let mut idx = vec![0usize; t];
        loop {
            let theta: Vec<f64> = idx.iter().map(|&i| i as f64 * step0).collect();
            let d = dist(&theta);
            if d < best_d {
                best_d = d;
                best = theta;
            }
            let mut k = 0;
            while k < t {
                idx[k] += 1;
                if idx[k] < per_dim {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == t {
                break;
            }
        }
        let mut step = step0;
        while step > 1e-12 {
            let mut moved = false;
            for k in 0..t {
                for sign in [1.0, -1.0] {
                    let mut trial = best.clone();
                    trial[k] += sign * step;
                    let d = dist(&trial);
                    if d < best_d {
                        best_d = d;
                        best = trial;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best_d
    }

    /// Leaf labels: squared plane radii followed by the fixed coordinates.
    pub fn labels(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.planes).map(|k| x[2 * k].powi(2) + x[2 * k + 1].powi(2)).collect();
        out.extend_from_slice(&x[2 * self.planes..]);
        out
    }

    pub fn same_leaf(&self, p: &[f64], q: &[f64], tol: f64) -> Result<bool, ModelError> {
        for x in [p, q] {
            if x.len() != self.dim() {
                return Err(ModelError::DimensionMismatch { expected: self.dim(), found: x.len() });
            }
        }
        let radius = |x: &[f64], k: usize| x[2 * k].hypot(x[2 * k + 1]);
        if (0..self.planes).any(|k| (radius(p, k) - radius(q, k)).abs() >= tol) {
            return Ok(false);
        }
        if (2 * self.planes..self.dim()).any(|i| (p[i] - q[i]).abs() >= tol) {
            return Ok(false);
        }
        let active: Vec<usize> = (0..self.planes).filter(|&k| radius(p, k) >= tol).collect();
        if active.is_empty() {
            return Ok(true);
        }
        let phase = |x: &[f64], k: usize| x[2 * k + 1].atan2(x[2 * k]);
        let delta: Vec<f64> = active.iter().map(|&k| phase(q, k) - phase(p, k)).collect();
        Ok(self.solve_phase(&active, &delta).is_some_and(|theta| crate::sphere::distance(&self.act(&theta, p), q) < tol))
    }

    /// Finds `theta` with `W_A theta = delta + 2 pi n` for some integer `n`,
    /// enumerating the lattice shifts the weight rows allow.
    fn solve_phase(&self, active: &[usize], delta: &[f64]) -> Option<Vec<f64>> {
        let t = self.torus_rank();
        if t == 0 {
            return delta.iter().all(|d| wrap(*d).abs() < 1e-12).then(Vec::new);
        }
        let a = DMatrix::from_fn(active.len(), t, |i, j| self.weights[active[i]][j] as f64);
        let bounds: Vec<i64> = active.iter().map(|&k| self.weights[k].iter().map(|w| w.abs()).sum::<i64>() + 1).collect();
        let svd = a.clone().svd(true, true);
        let mut shifts: Vec<i64> = bounds.iter().map(|b| -b).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        loop {
            let rhs = DVector::from_iterator(active.len(), delta.iter().zip(&shifts).map(|(d, n)| d + TAU * *n as f64));
            if let Ok(theta) = svd.solve(&rhs, 1e-12) {
                let res = (&a * &theta - &rhs).iter().map(|r| wrap(*r).abs()).fold(0.0, f64::max);
                if best.as_ref().is_none_or(|(b, _)| res < *b) {
                    best = Some((res, theta.iter().copied().collect()));
                }
                if res < 1e-9 {
                    break;
                }
            }
            let mut i = 0;
            loop {
                if i >= active.len() {
                    return best.map(|(_, th)| th);
                }
                shifts[i] += 1;
                if shifts[i] <= bounds[i] {
                    break;
                }
                shifts[i] = -bounds[i];
                i += 1;
            }
        }
        best.map(|(_, th)| th)
    }
}

fn wrap(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

fn i_pow(k: u32) -> CQ {
    let (re, im) = match k % 4 {
        0 => (1, 0),
        1 => (0, 1),
        2 => (-1, 0),
        _ => (0, -1),
    };
    CQ::new(Rational::from_i64(re), Rational::from_i64(im))
}

/// `x^p y^q` with `x = (z + zbar)/2`, `y = (z - zbar)/(2i)`, as a list of
/// `(a, coefficient of z^a zbar^(p+q-a))`.
fn plane_expansion(p: u16, q: u16) -> Vec<(u32, CQ)> {
    let (p, q) = (p as u32, q as u32);
    let mut by_a: BTreeMap<u32, CQ> = BTreeMap::new();
    let denom = Rational::from_i64(1i64 << (p + q));
    // 1/i^q = (-i)^q = i^(3q)
    let unit = i_pow(3 * q);
    for s in 0..=p {
        for t in 0..=q {
            let sign = if (q - t) % 2 == 1 { -1 } else { 1 };
            let c = Rational::from_i64(sign * binomial(p as u64, s as u64) as i64 * binomial(q as u64, t as u64) as i64) / denom.clone();
            let slot = by_a.entry(s + t).or_insert_with(CQ::zero);
            *slot += unit.clone() * c;
        }
    }
    by_a.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// `(x + iy)^a (x - iy)^b` as a map from `(deg x, deg y)` to coefficients.
fn zzbar_in_xy(a: u32, b: u32) -> BTreeMap<(u16, u16), CQ> {
    let mut out: BTreeMap<(u16, u16), CQ> = BTreeMap::new();
    for u in 0..=a {
        for v in 0..=b {
            let sign = if v % 2 == 1 { -1 } else { 1 };
            let c = i_pow(u + v) * Rational::from_i64(sign * binomial(a as u64, u as u64) as i64 * binomial(b as u64, v as u64) as i64);
            let key = ((a + b - u - v) as u16, (u + v) as u16);
            let slot = out.entry(key).or_insert_with(CQ::zero);
            *slot += c;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_poly;
    use crate::sphere::{sample_sphere_with, stream_rng};

    fn t2() -> TorusModel {
        TorusModel::new(vec![vec![1, 0], vec![0, 1]], 0, ScalarMode::Exact).unwrap()
    }

    fn hopf() -> TorusModel {
        TorusModel::new(vec![vec![1], vec![1]], 0, ScalarMode::Exact).unwrap()
    }

    fn q(s: &str, d: usize) -> QPoly {
        parse_poly(s, d).unwrap()
    }

    #[test]
    fn full_torus_examples() {
        let m = t2();
        assert!(m.reynolds(&q("x1*x3", 4)).unwrap().is_zero());
        assert_eq!(m.reynolds(&q("x1^2", 4)).unwrap(), q("1/2*x1^2 + 1/2*x2^2", 4));
        assert_eq!(m.reynolds(&q("x1^4", 4)).unwrap(), q("3/8*x1^4 + 3/4*x1^2*x2^2 + 3/8*x2^4", 4));
    }

    #[test]
    fn hopf_keeps_mixed_invariants() {
        let m = hopf();
        assert_eq!(m.reynolds(&q("x1*x3", 4)).unwrap(), q("1/2*x1*x3 + 1/2*x2*x4", 4));
        assert_eq!(m.reynolds(&q("x1*x4", 4)).unwrap(), q("1/2*x1*x4 - 1/2*x2*x3", 4));
        assert!(m.reynolds(&q("x1*x2*x3", 4)).unwrap().is_zero());
    }

    #[test]
    fn weighted_circle_mixes_degrees() {
        let m = TorusModel::new(vec![vec![1], vec![2]], 0, ScalarMode::Exact).unwrap();
        // Re(z1^2 zbar2) is invariant: x1^2 x3 - x2^2 x3 + 2 x1 x2 x4
        let inv = q("x1^2*x3 - x2^2*x3 + 2*x1*x2*x4", 4);
        assert_eq!(m.reynolds(&inv).unwrap(), inv);
        assert!(m.reynolds(&q("x1*x3", 4)).unwrap().is_zero());
    }

    #[test]
    fn reynolds_is_idempotent_and_leaf_constant() {
        let m = TorusModel::new(vec![vec![1], vec![2]], 1, ScalarMode::Exact).unwrap();
        let f = q("x1^3*x3 + 2*x2*x4*x5 - x1^2*x5^2 + x3^2*x4", 5);
        let a = m.reynolds(&f).unwrap();
        assert_eq!(m.reynolds(&a).unwrap(), a);
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let p = sample_sphere_with(5, &mut rng);
            let mp = m.random_mate(&p, &mut rng);
            assert!((a.eval_f64(&p).unwrap() - a.eval_f64(&mp).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn same_leaf_examples() {
        let m = t2();
        assert!(m.same_leaf(&[0.6, 0.0, 0.8, 0.0], &[0.0, 0.6, 0.0, 0.8], 1e-9).unwrap());
        assert!(!m.same_leaf(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], 1e-9).unwrap());
        let h = hopf();
        // independent plane rotations are not Hopf moves
        assert!(!h.same_leaf(&[0.6, 0.0, 0.8, 0.0], &[0.0, 0.6, 0.8, 0.0], 1e-9).unwrap());
        assert!(h.same_leaf(&[0.6, 0.0, 0.8, 0.0], &[0.0, 0.6, 0.0, 0.8], 1e-9).unwrap());
        let w = TorusModel::new(vec![vec![1], vec![2]], 0, ScalarMode::Exact).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..50 {
            let p = sample_sphere_with(4, &mut rng);
            let mp = w.random_mate(&p, &mut rng);
            assert!(w.same_leaf(&p, &mp, 1e-9).unwrap());
            let other = h.random_mate(&p, &mut rng);
            assert!(!w.same_leaf(&p, &other, 1e-9).unwrap() || crate::sphere::distance(&p, &other) < 1e-6);
        }
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let f: Poly<f64> = parse_poly("x1^2", 4).unwrap();
        assert!(matches!(t2().reynolds(&f), Err(ModelError::ModeMismatch { .. })));
    }
}
