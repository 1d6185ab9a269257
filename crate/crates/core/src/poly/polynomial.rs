use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use super::exponent::ExponentVector;
use super::scalar::{Rational, Scalar, ScalarMode};
use super::PolyError;

/// Sparse multivariate polynomial over `S` in `dim` ambient coordinates.
///
/// Terms are kept in canonical form: no stored zero coefficients and every
/// exponent vector has length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S> {
    dim: usize,
    terms: BTreeMap<ExponentVector, S>,
}

pub type QPoly = Poly<Rational>;
pub type FPoly = Poly<f64>;

impl<S: Scalar> Poly<S> {
    pub fn zero(dim: usize) -> Self {
        Poly { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: S) -> Self {
        Self::monomial(ExponentVector::zero(dim), c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, S::one())
    }

    pub fn monomial(exponents: ExponentVector, c: S) -> Self {
        let dim = exponents.dim();
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exponents, c);
        }
        Poly { dim, terms }
    }

    /// The coordinate function `x_{var+1}`.
    pub fn var(dim: usize, var: usize) -> Self {
        Self::monomial(ExponentVector::unit(dim, var), S::one())
    }

    /// `r^2 = x1^2 + ... + xN^2`.
    pub fn radius_squared(dim: usize) -> Self {
        let mut p = Self::zero(dim);
        for i in 0..dim {
            let mut e = vec![0u16; dim];
            e[i] = 2;
            p.add_term(ExponentVector::new(e), S::one());
        }
        p
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (ExponentVector, S)>,
    {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            if e.dim() != dim {
                return Err(PolyError::DimensionMismatch { expected: dim, found: e.dim() });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> ScalarMode {
        S::MODE
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&ExponentVector, &S)> {
        self.terms.iter()
    }

    pub fn coeff(&self, e: &ExponentVector) -> S {
        self.terms.get(e).cloned().unwrap_or_else(S::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.degree()).max()
    }

    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(|e| e.degree());
        match degs.next() {
            None => true,
            Some(d) => degs.all(|x| x == d),
        }
    }

    pub fn add_term(&mut self, e: ExponentVector, c: S) {
        debug_assert_eq!(e.dim(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.remove(&e) {
            Some(old) => {
                let s = old + c;
                if !s.is_zero() {
                    self.terms.insert(e, s);
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    fn check_dim(&self, other: &Self) -> Result<(), PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_dim(other)?;
        let mut out = Self::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.add_term(ea.mul(eb), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &S) -> Self {
        if c.is_zero() {
            return Self::zero(self.dim);
        }
        let terms = self
            .terms
            .iter()
            .map(|(e, a)| (e.clone(), a.clone() * c.clone()))
            .filter(|(_, a)| !a.is_zero())
            .collect();
        Poly { dim: self.dim, terms }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.dim);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, x: &[S]) -> Result<S, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        let mut total = S::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (i, &a) in e.as_slice().iter().enumerate() {
                for _ in 0..a {
                    m = m * x[i].clone();
                }
            }
            total = total + m;
        }
        Ok(total)
    }

    /// Floating evaluation regardless of the coefficient field.
    pub fn eval_f64(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(self.terms.iter().map(|(e, c)| c.to_f64() * e.eval_f64(x)).sum())
    }

    /// Map of degree to homogeneous component. The zero polynomial has none.
    pub fn homogeneous_components(&self) -> BTreeMap<u32, Self> {
        let mut out: BTreeMap<u32, Self> = BTreeMap::new();
        for (e, c) in &self.terms {
            out.entry(e.degree())
                .or_insert_with(|| Self::zero(self.dim))
                .add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn partial(&self, var: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            if let Some(lo) = e.lowered(var) {
                out.add_term(lo, c.clone() * S::from_i64(e.get(var) as i64));
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.dim).map(|i| self.partial(i)).collect()
    }

    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            for i in 0..self.dim {
                let a = e.get(i) as i64;
                if a >= 2 {
                    let lo = e.lowered(i).and_then(|x| x.lowered(i)).expect("exponent >= 2");
                    out.add_term(lo, c.clone() * S::from_i64(a * (a - 1)));
                }
            }
        }
        out
    }

    /// Euler field `E(p) = sum x_i dp/dx_i`; equals `m p` on degree-`m` homogeneous input.
    pub fn euler(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.clone() * S::from_i64(e.degree() as i64));
        }
        out
    }

    /// `<grad p, grad q>`.
    pub fn gradient_dot(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for i in 0..self.dim {
            out = &out + &(&self.partial(i) * &other.partial(i));
        }
        out
    }

    /// Composition with a linear map: `x_i -> sum_j rows[i][j] x_j`.
    pub fn substitute_linear(&self, rows: &[Vec<S>]) -> Self {
        let forms: Vec<Self> = rows
            .iter()
            .map(|row| {
                let mut f = Self::zero(self.dim);
                for (j, c) in row.iter().enumerate() {
                    f.add_term(ExponentVector::unit(self.dim, j), c.clone());
                }
                f
            })
            .collect();
        self.substitute(&forms)
    }

    /// Composition `p(q_1, ..., q_N)`.
    pub fn substitute(&self, images: &[Self]) -> Self {
        let mut powers: Vec<Vec<Self>> = images.iter().map(|q| vec![Self::one(q.dim)]).collect();
        let out_dim = images.first().map(|q| q.dim).unwrap_or(self.dim);
        let mut out = Self::zero(out_dim);
        for (e, c) in &self.terms {
            let mut m = Self::constant(out_dim, c.clone());
            for (i, &a) in e.as_slice().iter().enumerate() {
                while powers[i].len() <= a as usize {
                    let next = powers[i].last().expect("nonempty") * &images[i];
                    powers[i].push(next);
                }
                if a > 0 {
                    m = &m * &powers[i][a as usize];
                }
            }
            out = &out + &m;
        }
        out
    }

    /// Coefficient vector over the given monomial list; terms outside it are ignored.
    pub fn coefficients_in(&self, basis: &[ExponentVector]) -> Vec<S> {
        basis.iter().map(|e| self.coeff(e)).collect()
    }

    pub fn from_coefficients(basis: &[ExponentVector], coeffs: &[S]) -> Self {
        let dim = basis.first().map(|e| e.dim()).unwrap_or(0);
        let mut p = Self::zero(dim);
        for (e, c) in basis.iter().zip(coeffs) {
            p.add_term(e.clone(), c.clone());
        }
        p
    }

    pub fn map_coefficients<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Poly<T> {
        let mut out = Poly::<T>::zero(self.dim);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), f(c));
        }
        out
    }

    pub fn to_float(&self) -> FPoly {
        self.map_coefficients(|c| c.to_f64())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.abs_f64()).fold(0.0, f64::max)
    }
}

impl FPoly {
    /// Drops coefficients with `|c| <= tol`.
    pub fn pruned(&self, tol: f64) -> FPoly {
        let mut out = FPoly::zero(self.dim);
        for (e, c) in &self.terms {
            if c.abs() > tol {
                out.add_term(e.clone(), *c);
            }
        }
        out
    }
}

impl<'a, S: Scalar> Add for &'a Poly<S> {
    type Output = Poly<S>;
    /// Panics on dimension mismatch; use [`Poly::try_add`] for a checked version.
    fn add(self, rhs: Self) -> Poly<S> {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl<'a, S: Scalar> Sub for &'a Poly<S> {
    type Output = Poly<S>;
    fn sub(self, rhs: Self) -> Poly<S> {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl<'a, S: Scalar> Mul for &'a Poly<S> {
    type Output = Poly<S>;
    fn mul(self, rhs: Self) -> Poly<S> {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl<'a, S: Scalar> Neg for &'a Poly<S> {
    type Output = Poly<S>;
    fn neg(self) -> Poly<S> {
        self.scale(&(-S::one()))
    }
}
