use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::RwLock;

use rand::Rng;

use super::ModelError;
use crate::poly::{ExponentVector, Poly, Rational, Scalar, ScalarMode};

/// Entrywise tolerance for deduplicating floating group elements.
pub const TOL_DEDUP: f64 = 1e-9;
/// Tolerance on `g^T g = I` for floating generators.
pub const TOL_ORTH: f64 = 1e-9;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    n: usize,
    entries: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self, ModelError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(ModelError::InvalidModel(format!("matrix is not {n}x{n}")));
        }
        Ok(Matrix { n, entries: rows.into_iter().flatten().collect() })
    }

    pub fn from_row_major(n: usize, entries: Vec<S>) -> Result<Self, ModelError> {
        if entries.len() != n * n {
            return Err(ModelError::InvalidModel(format!(
                "expected {} entries for a {n}x{n} matrix, found {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Matrix { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let entries = (0..n * n).map(|k| if k / n == k % n { S::one() } else { S::zero() }).collect();
        Matrix { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    pub fn mul(&self, other: &Matrix<S>) -> Matrix<S> {
        let n = self.n;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut s = S::zero();
                for k in 0..n {
                    s = s + self.get(i, k).clone() * other.get(k, j).clone();
                }
                entries.push(s);
            }
        }
        Matrix { n, entries }
    }

    pub fn transpose(&self) -> Matrix<S> {
        let n = self.n;
        let entries = (0..n * n).map(|k| self.get(k % n, k / n).clone()).collect();
        Matrix { n, entries }
    }

    /// Largest entrywise deviation of `g^T g` from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let p = self.transpose().mul(self);
        let id = Matrix::<S>::identity(self.n);
        p.entries.iter().zip(&id.entries).map(|(a, b)| (a.clone() - b.clone()).abs_f64()).fold(0.0, f64::max)
    }

    pub fn is_orthogonal(&self) -> bool {
        match S::MODE {
            ScalarMode::Exact => self.transpose().mul(self) == Matrix::identity(self.n),
            ScalarMode::Float => self.orthogonality_defect() <= TOL_ORTH,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j).to_f64() * x[j]).sum()).collect()
    }

    fn approx_eq(&self, other: &Matrix<S>, tol: f64) -> bool {
        self.entries.iter().zip(&other.entries).all(|(a, b)| (a.clone() - b.clone()).abs_f64() <= tol)
    }
}

/// Finite subgroup of O(N) given by generators; its orbits are the leaves.
#[derive(Debug)]
pub struct FiniteGroupModel<S> {
    name: String,
    generators: Vec<Matrix<S>>,
    elements: Vec<Matrix<S>>,
    max_group_size: usize,
    cache: RwLock<HashMap<ExponentVector, Poly<S>>>,
}

impl<S: Scalar> Clone for FiniteGroupModel<S> {
    fn clone(&self) -> Self {
        FiniteGroupModel {
            name: self.name.clone(),
            generators: self.generators.clone(),
            elements: self.elements.clone(),
            max_group_size: self.max_group_size,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

/// Breadth-first closure of `generators` under multiplication.
pub fn group_closure<S: Scalar>(
    generators: Vec<Matrix<S>>,
    max_group_size: usize,
) -> Result<FiniteGroupModel<S>, ModelError> {
    let n = generators.first().map(|g| g.dim()).ok_or_else(|| ModelError::InvalidModel("no generators".into()))?;
    if max_group_size < 1 {
        return Err(ModelError::InvalidModel("max_group_size must be at least 1".into()));
    }
    for (index, g) in generators.iter().enumerate() {
        if g.dim() != n {
            return Err(ModelError::DimensionMismatch { expected: n, found: g.dim() });
        }
        if !g.is_orthogonal() {
            return Err(ModelError::NonOrthogonalGenerator { index, defect: g.orthogonality_defect() });
        }
    }
    let identity = Matrix::identity(n);
    let mut elements = vec![identity.clone()];
    let mut seen_exact: HashSet<Vec<String>> = HashSet::new();
    let key = |m: &Matrix<S>| -> Vec<String> { m.entries.iter().map(|a| format!("{a:?}")).collect() };
    if S::MODE == ScalarMode::Exact {
        seen_exact.insert(key(&identity));
    }
    let mut queue = VecDeque::from([identity]);
    while let Some(x) = queue.pop_front() {
        for g in &generators {
            let y = x.mul(g);
            let fresh = match S::MODE {
                ScalarMode::Exact => seen_exact.insert(key(&y)),
                ScalarMode::Float => !elements.iter().any(|e| e.approx_eq(&y, TOL_DEDUP)),
            };
            if fresh {
                if elements.len() >= max_group_size {
                    return Err(ModelError::GroupTooLarge { limit: max_group_size });
                }
                elements.push(y.clone());
                queue.push_back(y);
            }
        }
    }
    Ok(FiniteGroupModel {
        name: String::new(),
        generators,
        elements,
        max_group_size,
        cache: RwLock::new(HashMap::new()),
    })
}

impl<S: Scalar> FiniteGroupModel<S> {
    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Matrix<S>] {
        &self.elements
    }

    pub fn generators(&self) -> &[Matrix<S>] {
        &self.generators
    }

    pub fn max_group_size(&self) -> usize {
        self.max_group_size
    }

    fn monomial_average(&self, e: &ExponentVector) -> Poly<S> {
        if let Some(p) = self.cache.read().expect("cache poisoned").get(e) {
            return p.clone();
        }
        let m = Poly::monomial(e.clone(), S::one());
        let mut sum = Poly::zero(self.dim());
        for g in &self.elements {
            sum = &sum + &m.substitute_linear(&g.rows());
        }
        let avg = sum.scale(&(S::one() / S::from_i64(self.order() as i64)));
        self.cache.write().expect("cache poisoned").insert(e.clone(), avg.clone());
        avg
    }

    /// Reynolds operator `(1/|G|) sum_g f(g x)`.
    pub fn reynolds(&self, f: &Poly<S>) -> Result<Poly<S>, ModelError> {
        if f.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: f.dim() });
        }
        let mut out = Poly::zero(self.dim());
        for (e, c) in f.terms() {
            out = &out + &self.monomial_average(e).scale(c);
        }
        Ok(out)
    }

    pub fn same_leaf(&self, p: &[f64], q: &[f64], tol: f64) -> Result<bool, ModelError> {
        check_len(p, self.dim())?;
        check_len(q, self.dim())?;
        Ok(self.elements.iter().any(|g| crate::sphere::distance(&g.apply(p), q) < tol))
    }

    /// Distance from `q` to the orbit of `p`.
    pub fn orbit_distance(&self, p: &[f64], q: &[f64]) -> f64 {
        self.elements.iter().map(|g| crate::sphere::distance(&g.apply(p), q)).fold(f64::INFINITY, f64::min)
    }

    pub fn random_mate<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R) -> Vec<f64> {
        let g = &self.elements[rng.random_range(0..self.order())];
        g.apply(p)
    }

    /// Floating copy with the same elements.
    pub fn to_float(&self) -> FiniteGroupModel<f64> {
        let conv = |m: &Matrix<S>| Matrix { n: m.n, entries: m.entries.iter().map(|a| a.to_f64()).collect() };
        FiniteGroupModel {
            name: self.name.clone(),
            generators: self.generators.iter().map(conv).collect(),
            elements: self.elements.iter().map(conv).collect(),
            max_group_size: self.max_group_size,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl FiniteGroupModel<Rational> {
    pub fn rational_elements(&self) -> &[Matrix<Rational>] {
        &self.elements
    }
}

fn check_len(x: &[f64], dim: usize) -> Result<(), ModelError> {
    if x.len() != dim {
        return Err(ModelError::DimensionMismatch { expected: dim, found: x.len() });
    }
    Ok(())
}

/// Signed permutation matrices helper: `perm[i]` is the column of the nonzero in row `i`.
pub fn signed_permutation<S: Scalar>(perm: &[usize], signs: &[i64]) -> Matrix<S> {
    let n = perm.len();
    let mut entries = vec![S::zero(); n * n];
    for (i, (&j, &s)) in perm.iter().zip(signs).enumerate() {
        entries[i * n + j] = S::from_i64(s);
    }
    Matrix { n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, QPoly};

    fn q(n: i64) -> Rational {
        Rational::from_i64(n)
    }

    fn minus_identity() -> Matrix<Rational> {
        signed_permutation(&[0, 1], &[-1, -1])
    }

    fn rotation90() -> Matrix<Rational> {
        Matrix::from_rows(vec![vec![q(0), q(-1)], vec![q(1), q(0)]]).unwrap()
    }

    #[test]
    fn closure_orders() {
        assert_eq!(group_closure(vec![minus_identity()], 10).unwrap().order(), 2);
        assert_eq!(group_closure(vec![rotation90()], 10).unwrap().order(), 4);
        let swap = signed_permutation::<Rational>(&[1, 0], &[1, 1]);
        let flip = signed_permutation(&[0, 1], &[-1, 1]);
        assert_eq!(group_closure(vec![swap, flip], 100).unwrap().order(), 8);
    }

    #[test]
    fn closure_elements_form_a_group() {
        let b3 = group_closure(
            vec![
                signed_permutation::<Rational>(&[1, 0, 2], &[1, 1, 1]),
                signed_permutation(&[0, 2, 1], &[1, 1, 1]),
                signed_permutation(&[0, 1, 2], &[-1, 1, 1]),
            ],
            100,
        )
        .unwrap();
        assert_eq!(b3.order(), 48);
        let els = b3.elements();
        for a in els {
            assert!(a.is_orthogonal());
            assert!(els.contains(&a.transpose()));
            for b in els.iter().take(6) {
                assert!(els.contains(&a.mul(b)));
            }
        }
    }

    #[test]
    fn closure_errors() {
        let bad = Matrix::from_rows(vec![vec![q(2), q(0)], vec![q(0), q(1)]]).unwrap();
        assert!(matches!(group_closure(vec![bad], 10), Err(ModelError::NonOrthogonalGenerator { index: 0, .. })));
        assert!(matches!(group_closure(vec![rotation90()], 3), Err(ModelError::GroupTooLarge { limit: 3 })));
        // irrational-angle rotation in floating mode never closes
        let t: f64 = 1.0;
        let rot = Matrix::from_rows(vec![vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap();
        assert!(matches!(group_closure(vec![rot], 500), Err(ModelError::GroupTooLarge { .. })));
    }

    #[test]
    fn floating_closure_dedups() {
        let s = 3f64.sqrt() / 2.0;
        let rot60 = Matrix::from_rows(vec![vec![0.5, -s], vec![s, 0.5]]).unwrap();
        assert_eq!(group_closure(vec![rot60], 100).unwrap().order(), 6);
    }

    #[test]
    fn reynolds_examples() {
        let pm = group_closure(vec![minus_identity()], 10).unwrap();
        let x: QPoly = parse_poly("x1", 2).unwrap();
        assert!(pm.reynolds(&x).unwrap().is_zero());
        let c4 = group_closure(vec![rotation90()], 10).unwrap();
        let x2: QPoly = parse_poly("x1^2", 2).unwrap();
        assert_eq!(c4.reynolds(&x2).unwrap(), parse_poly("1/2*x1^2 + 1/2*x2^2", 2).unwrap());
        assert!(c4.reynolds(&parse_poly("x1*x2", 2).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn same_leaf_on_orbits() {
        let pm = group_closure(vec![minus_identity()], 10).unwrap();
        assert!(pm.same_leaf(&[0.6, 0.8], &[-0.6, -0.8], 1e-9).unwrap());
        assert!(!pm.same_leaf(&[0.6, 0.8], &[0.8, 0.6], 1e-9).unwrap());
        assert!(pm.same_leaf(&[0.6], &[0.6, 0.8], 1e-9).is_err());
    }
}
