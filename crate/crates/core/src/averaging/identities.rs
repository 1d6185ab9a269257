//! Checks of the projection identities of the averaging operator.

use serde::Serialize;

use super::fit::{FitSettings, MonteCarloAverager};
use super::{visit_exact, AveragingError, ExactAverager, ExactVisitor};
use crate::models::FoliationModel;
use crate::poly::{sphere_inner, sphere_mean, FPoly, Poly, Polynomial, Scalar, ScalarMode};

/// Tolerance of floating closed-form engines, relative to the input scale.
const FLOAT_EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub model: String,
    pub f: Polynomial,
    pub g: Polynomial,
    /// `exact`, `floating` or `statistical`.
    pub regime: String,
    pub checks: Vec<IdentityCheck>,
    pub passed: bool,
}

impl IdentityReport {
    pub fn first_failure(&self) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

fn checks_for<S: Scalar>(
    f: &Poly<S>,
    g: &Poly<S>,
    avg: &dyn Fn(&Poly<S>) -> Result<Poly<S>, AveragingError>,
    tol: f64,
) -> Result<Vec<IdentityCheck>, AveragingError> {
    let af = avg(f)?;
    let ag = avg(g)?;
    let m = f.degree().unwrap_or(0);
    let b = ag.clone();
    let mut out = Vec::new();
    let mut push = |name: &str, residual: f64| {
        out.push(IdentityCheck { identity: name.to_string(), residual, tolerance: tol, passed: residual <= tol });
    };
    push("idempotence [[f]] = [f]", (&avg(&af)? - &af).max_abs_coeff());
    push(
        "self-adjointness <[f],g> = <f,[g]>",
        (sphere_inner(&af, g) - sphere_inner(f, &ag)).abs_f64(),
    );
    let excess = sphere_mean(&(&af * &af)) - sphere_mean(&(f * f));
    push("contraction mean([f]^2) <= mean(f^2)", if excess.is_negative() { 0.0 } else { excess.abs_f64() });
    push("module property [b f] = b [f] for basic b = [g]", (&avg(&(&b * f))? - &(&b * &af)).max_abs_coeff());
    push("laplacian commutation Delta[f] = [Delta f]", (&af.laplacian() - &avg(&f.laplacian())?).max_abs_coeff());
    let mf = af.scale(&S::from_i64(m as i64));
    push("euler field [E f] = E [f] = m [f]", (&avg(&f.euler())? - &mf).max_abs_coeff().max((&af.euler() - &mf).max_abs_coeff()));
    let preserved = af.is_zero() || (af.is_homogeneous() && af.degree() == Some(m));
    push("degree preservation", if preserved { 0.0 } else { 1.0 });
    Ok(out)
}

/// All identity checks, without turning failures into errors.
pub fn identity_report(
    model: &FoliationModel,
    f: &Polynomial,
    g: &Polynomial,
    settings: &FitSettings,
) -> Result<IdentityReport, AveragingError> {
    for p in [f, g] {
        if !p.is_homogeneous() {
            return Err(AveragingError::NotHomogeneous);
        }
    }
    let (regime, checks) = match model {
        FoliationModel::Isoparametric(m) => {
            let engine = MonteCarloAverager::new(m, settings.clone())?;
            let (ff, gf) = (f.to_float(), g.to_float());
            let scale = ff.max_abs_coeff().max(gf.max_abs_coeff()).max(1.0);
            let avg = |p: &FPoly| engine.fit_average(p);
            ("statistical", checks_for(&ff, &gf, &avg, settings.structured_tol * scale * scale)?)
        }
        _ => {
            if g.mode() != f.mode() {
                return Err(AveragingError::ModeMismatch { expected: f.mode(), found: g.mode() });
            }
            struct Visit<'a>(&'a Polynomial);
            impl ExactVisitor for Visit<'_> {
                type Output = Vec<IdentityCheck>;
                fn visit<S: Scalar, A: ExactAverager<S>>(self, model: &A, f: &Poly<S>) -> Result<Self::Output, AveragingError> {
                    let g: Poly<S> = match self.0 {
                        Polynomial::Exact(p) => p.map_coefficients(S::from_rational),
                        Polynomial::Float(p) => p.map_coefficients(|c| S::from_f64(*c)),
                    };
                    let tol = match S::MODE {
                        ScalarMode::Exact => 0.0,
                        ScalarMode::Float => FLOAT_EXACT_TOL * f.max_abs_coeff().max(g.max_abs_coeff()).max(1.0).powi(2),
                    };
                    let avg = |p: &Poly<S>| Ok(model.average(p));
                    checks_for(f, &g, &avg, tol)
                }
            }
            let regime = if f.mode() == ScalarMode::Exact { "exact" } else { "floating" };
            (regime, visit_exact(model, f, Visit(g))?)
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(IdentityReport {
        model: model.name().to_string(),
        f: f.clone(),
        g: g.clone(),
        regime: regime.to_string(),
        checks,
        passed,
    })
}

/// Checks idempotence, self-adjointness, contraction, the module property,
/// Laplacian and Euler-field commutation, and degree preservation. The first
/// failed identity is returned as [`AveragingError::IdentityViolation`].
pub fn verify_operator_identities(
    model: &FoliationModel,
    f: &Polynomial,
    g: &Polynomial,
    settings: &FitSettings,
) -> Result<IdentityReport, AveragingError> {
    let report = identity_report(model, f, g, settings)?;
    match report.first_failure() {
        Some(c) => Err(AveragingError::IdentityViolation { identity: c.identity.clone(), residual: c.residual }),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{group_closure, signed_permutation, TorusModel};
    use crate::poly::random::random_homogeneous;
    use crate::poly::{parse_poly, Rational};
    use crate::sphere::stream_rng;

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
            .unwrap(),
        )
    }

    #[test]
    fn hyperoctahedral_identities_are_exact() {
        let m = b3();
        let mut rng = stream_rng(17, 0);
        for _ in 0..5 {
            let f = Polynomial::Exact(random_homogeneous(3, 4, 6, &mut rng));
            let g = Polynomial::Exact(random_homogeneous(3, 2, 4, &mut rng));
            let r = verify_operator_identities(&m, &f, &g, &FitSettings::default()).unwrap();
            assert!(r.checks.iter().all(|c| c.residual == 0.0), "{r:?}");
        }
    }

    #[test]
    fn float_torus_within_tolerance() {
        let t = FoliationModel::Torus(TorusModel::new(vec![vec![1], vec![2]], 0, ScalarMode::Float).unwrap());
        let f = Polynomial::Float(parse_poly("0.3*x1^2*x3 - 1.7*x2*x4^2 + x1*x2*x3", 4).unwrap());
        let g = Polynomial::Float(parse_poly("x1^2 - 2*x3*x4", 4).unwrap());
        let r = verify_operator_identities(&t, &f, &g, &FitSettings::default()).unwrap();
        assert_eq!(r.regime, "floating");
    }

    #[test]
    fn odd_kernel_element() {
        let pm = FoliationModel::FiniteGroup(group_closure(vec![signed_permutation::<Rational>(&[0, 1], &[-1, -1])], 4).unwrap());
        let f = Polynomial::Exact(parse_poly("x1", 2).unwrap());
        let r = verify_operator_identities(&pm, &f, &f, &FitSettings::default()).unwrap();
        assert!(r.passed);
    }
}
