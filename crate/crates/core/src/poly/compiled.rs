use super::exponent::{monomial_basis, ExponentVector};
use super::polynomial::Poly;
use super::scalar::Scalar;

/// Flattened floating copy of a polynomial for hot evaluation loops.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    dim: usize,
    max_exp: usize,
    coeffs: Vec<f64>,
    exps: Vec<u16>,
}

impl CompiledPoly {
    pub fn new<S: Scalar>(p: &Poly<S>) -> Self {
        let mut coeffs = Vec::with_capacity(p.num_terms());
        let mut exps = Vec::with_capacity(p.num_terms() * p.dim());
        let mut max_exp = 0usize;
        for (e, c) in p.terms() {
            coeffs.push(c.to_f64());
            for &a in e.as_slice() {
                max_exp = max_exp.max(a as usize);
                exps.push(a);
            }
        }
        CompiledPoly { dim: p.dim(), max_exp, coeffs, exps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates at `x`; `scratch` is reused between calls to hold power tables.
    pub fn eval_with(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let stride = self.max_exp + 1;
        fill_powers(x, stride, scratch);
        let mut total = 0.0;
        for (t, c) in self.coeffs.iter().enumerate() {
            let mut m = *c;
            for (i, &a) in self.exps[t * self.dim..(t + 1) * self.dim].iter().enumerate() {
                if a > 0 {
                    m *= scratch[i * stride + a as usize];
                }
            }
            total += m;
        }
        total
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(x, &mut Vec::new())
    }
}

/// Evaluates every monomial of one degree at a point, in `monomial_basis` order.
#[derive(Debug, Clone)]
pub struct MonomialEvaluator {
    dim: usize,
    degree: usize,
    basis: Vec<ExponentVector>,
}

impl MonomialEvaluator {
    pub fn new(dim: usize, degree: u32) -> Self {
        MonomialEvaluator { dim, degree: degree as usize, basis: monomial_basis(dim, degree) }
    }

    pub fn basis(&self) -> &[ExponentVector] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn eval_into(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let stride = self.degree + 1;
        fill_powers(x, stride, scratch);
        for (k, e) in self.basis.iter().enumerate() {
            let mut m = 1.0;
            for i in 0..self.dim {
                let a = e.get(i) as usize;
                if a > 0 {
                    m *= scratch[i * stride + a];
                }
            }
            out[k] = m;
        }
    }
}

fn fill_powers(x: &[f64], stride: usize, scratch: &mut Vec<f64>) {
    scratch.clear();
    scratch.resize(x.len() * stride, 1.0);
    for (i, &xi) in x.iter().enumerate() {
        let row = &mut scratch[i * stride..(i + 1) * stride];
        for a in 1..stride {
            row[a] = row[a - 1] * xi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{parse_poly, FPoly};

    #[test]
    fn matches_direct_evaluation() {
        let p: FPoly = parse_poly("3*x1^3*x2 - 0.5*x2^2*x3 + x3 - 2", 3).unwrap();
        let c = CompiledPoly::new(&p);
        let x = [0.3, -1.2, 0.7];
        assert!((c.eval(&x) - p.eval_f64(&x).unwrap()).abs() < 1e-14);
        let m = MonomialEvaluator::new(3, 2);
        let mut out = vec![0.0; m.len()];
        m.eval_into(&x, &mut Vec::new(), &mut out);
        assert!((out[0] - 0.09).abs() < 1e-15);
        assert!((out[5] - 0.49).abs() < 1e-15);
    }
}
