//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are printed on
//! every `cargo test`. Exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use leafavg_core::averaging::{
    average_structured, enumerate_products, fit_points, identity_report, reynolds, FitSettings, MonteCarloAverager,
};
use leafavg_core::basic_ring::{basic_subspace, discover_generators, molien_dimensions, BasicRingSettings, GeneratorSet};
use leafavg_core::linalg::SpanBuilder;
use leafavg_core::models::{validate_munzner, CartanPolynomial, FoliationModel, IsoparametricModel, ModelError};
use leafavg_core::poly::random::random_homogeneous;
use leafavg_core::poly::{monomial_basis, parse_poly, FPoly, Polynomial, QPoly, Rational, ScalarMode};
use leafavg_core::runner::{build_model, run, RunConfig};
use leafavg_core::separation::{quotient_image_export, separation_test, SeparationSettings};
use leafavg_core::sphere::stream_rng;

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(format!("{name}.toml"))).expect("bundled config loads")
}

fn model(name: &str) -> FoliationModel {
    build_model(&config(name).model).expect("bundled model builds")
}

fn bundled_configs() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .expect("configs directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// 1. Exact operator identities with residual exactly 0.
fn operator_identities() -> Outcome {
    let mut total = 0;
    for name in ["b3", "c4", "t2"] {
        let m = model(name);
        let mut rng = stream_rng(1, 0);
        for i in 0..50 {
            let deg = 1 + (i % 6) as u32;
            let f = Polynomial::Exact(random_homogeneous(m.dim(), deg, 6, &mut rng));
            let g = Polynomial::Exact(random_homogeneous(m.dim(), 2, 4, &mut rng));
            let r = identity_report(&m, &f, &g, &FitSettings::default()).map_err(|e| e.to_string())?;
            for c in &r.checks {
                check(c.residual == 0.0, format!("{name}: {} residual {:e} for f = {f}", c.identity, c.residual))?;
                total += 1;
            }
        }
    }
    Ok(format!("{total} identity checks on B3, C4, T2, all residuals exactly 0"))
}

/// 2. dim B_d equals the Molien coefficients, d <= 8.
fn molien_equivalence() -> Outcome {
    let settings = BasicRingSettings::default();
    let mut groups = Vec::new();
    for name in bundled_configs() {
        let m = model(&name);
        if !matches!(m, FoliationModel::FiniteGroup(_)) {
            continue;
        }
        let molien = molien_dimensions(&m, 8).map_err(|e| e.to_string())?;
        for d in 1..=8 {
            let b = basic_subspace(&m, d, &settings, None).map_err(|e| e.to_string())?;
            check(b.rank == molien[d as usize], format!("{name}: dim B_{d} = {} but Molien gives {}", b.rank, molien[d as usize]))?;
        }
        groups.push(format!("{name} {:?}", &molien[1..]));
    }
    check(groups.len() >= 3, "fewer than three bundled finite groups")?;
    Ok(groups.join("; "))
}

/// Exact span of the degree-`d` products of `gens`.
fn product_span(gens: &[QPoly], d: u32) -> SpanBuilder<Rational> {
    let dim = gens[0].dim();
    let basis = monomial_basis(dim, d);
    let degs: Vec<u32> = gens.iter().map(|g| g.degree().unwrap()).collect();
    let mut span = SpanBuilder::new(0.0);
    for pat in enumerate_products(&degs, d) {
        let mut p = QPoly::one(dim);
        for (g, &e) in gens.iter().zip(&pat) {
            p = &p * &g.pow(e);
        }
        span.insert(&p.coefficients_in(&basis));
    }
    span
}

/// 3. Generator discovery on known rings.
fn generator_discovery() -> Outcome {
    let s = BasicRingSettings::default();
    let b3 = discover_generators(&model("b3"), 6, &s).map_err(|e| e.to_string())?;
    check(b3.degrees() == [2, 4, 6], format!("B3 degrees {:?}", b3.degrees()))?;
    let found: Vec<QPoly> = b3.generators.iter().map(|g| g.poly.as_exact().unwrap().clone()).collect();
    let elem: Vec<QPoly> = ["x1^2 + x2^2 + x3^2", "x1^2*x2^2 + x1^2*x3^2 + x2^2*x3^2", "x1^2*x2^2*x3^2"]
        .iter()
        .map(|t| parse_poly(t, 3).unwrap())
        .collect();
    for (a, b, label) in [(&found, &elem, "elementary"), (&elem, &found, "discovered")] {
        for p in a {
            let d = p.degree().unwrap();
            let basis = monomial_basis(3, d);
            check(product_span(b, d).contains(&p.coefficients_in(&basis)), format!("{p} is not a polynomial in the {label} generators"))?;
        }
    }
    let t2 = discover_generators(&model("t2"), 4, &s).map_err(|e| e.to_string())?;
    let t2_texts: Vec<String> = t2.generators.iter().map(|g| g.poly.to_string()).collect();
    check(t2_texts == ["x1^2 + x2^2", "x3^2 + x4^2"], format!("T2 generators {t2_texts:?}"))?;
    let hopf = discover_generators(&model("hopf"), 2, &s).map_err(|e| e.to_string())?;
    let h_texts: Vec<String> = hopf.generators.iter().map(|g| g.poly.to_string()).collect();
    check(
        h_texts == ["x1^2 + x2^2", "x1*x3 + x2*x4", "x1*x4 - x2*x3", "x3^2 + x4^2"],
        format!("Hopf generators {h_texts:?}"),
    )?;
    // discovered order is (|z1|^2, Re, -Im, |z2|^2)
    let table = quotient_image_export(&hopf, None, 1000, 7).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in &table.rows {
        let (r1, re, im, r2) = (row[4], row[5], row[6], row[7]);
        worst = worst.max((re * re + im * im - r1 * r2).abs()).max((r1 + r2 - 1.0).abs());
    }
    check(worst < 1e-10, format!("Hopf relation residual {worst:e}"))?;
    Ok(format!(
        "B3 degrees [2, 4, 6] and elementary symmetric in squares (exact); T2 {t2_texts:?}; Hopf relation max residual {worst:.1e} on 1000 points"
    ))
}

fn iso_g2(samples: usize) -> IsoparametricModel {
    let FoliationModel::Isoparametric(m) = model("iso_g2") else { panic!("iso_g2 is isoparametric") };
    let mut p = m.params().clone();
    p.samples = samples;
    p.bandwidth = 0.05;
    let mut m = m;
    m.set_params(p);
    m
}

/// 4. Monte Carlo leaf averages against the exact torus averages.
fn cross_engine() -> Outcome {
    let iso = iso_g2(1_000_000);
    let torus = model("t2");
    let mc = MonteCarloAverager::new(&iso, FitSettings { seed: 4, ..FitSettings::default() }).map_err(|e| e.to_string())?;
    let points = fit_points(&iso, 20, 4, 99);
    let mut rng = stream_rng(4, 1);
    let polys: Vec<QPoly> = (0..20).map(|i| random_homogeneous(4, 1 + (i % 4) as u32, 5, &mut rng)).collect();
    let floats: Vec<FPoly> = polys.iter().map(|p| p.to_float()).collect();
    let est = mc.estimate(&points, &floats).map_err(|e| e.to_string())?;
    let (mut within, mut total) = (0, 0);
    let mut worst_z: f64 = 0.0;
    for (k, p) in polys.iter().enumerate() {
        let exact = reynolds(&torus, &Polynomial::Exact(p.clone())).map_err(|e| e.to_string())?;
        for (j, x) in points.iter().enumerate() {
            let truth = exact.eval_f64(x).unwrap();
            let z = (est.values[(j, k)] - truth).abs() / est.std_errors[(j, k)].max(f64::MIN_POSITIVE);
            worst_z = worst_z.max(z);
            total += 1;
            if z <= 3.0 {
                within += 1;
            }
        }
    }
    let share = within as f64 / total as f64;
    check(share >= 0.95, format!("only {within}/{total} estimates within 3 standard errors (worst z {worst_z:.2})"))?;
    Ok(format!("{within}/{total} within 3 standard errors, N = 10^6, h = 0.05, min ESS {:.0}", est.min_ess))
}

/// 5. Structured recovery of [x1^2] = (r^2 + F)/4.
fn structured_recovery() -> Outcome {
    let iso = FoliationModel::Isoparametric(iso_g2(1_000_000));
    let gens: Vec<Polynomial> = ["x1^2 + x2^2 + x3^2 + x4^2", "x1^2 + x2^2 - x3^2 - x4^2"]
        .iter()
        .map(|t| Polynomial::parse(t, 4, ScalarMode::Float).unwrap())
        .collect();
    let f = Polynomial::parse("x1^2", 4, ScalarMode::Float).unwrap();
    let s = average_structured(&iso, &f, &gens, &FitSettings { seed: 5, ..FitSettings::default() }).map_err(|e| e.to_string())?;
    let err = s.coefficients.iter().map(|c| (c - 0.25).abs()).fold(0.0, f64::max);
    check(err < 0.02, format!("coefficients {:?}, error {err:.4}", s.coefficients))?;
    check(
        s.comparison.within_two_std_errors,
        format!("unstructured fit differs by {:.2e} (2 SE = {:.2e})", s.comparison.l2_distance, 2.0 * s.comparison.l2_std_error),
    )?;
    Ok(format!(
        "coefficients [{:.4}, {:.4}], max error {err:.4}; unstructured L2 distance {:.1e} <= 2 SE {:.1e}",
        s.coefficients[0],
        s.coefficients[1],
        s.comparison.l2_distance,
        2.0 * s.comparison.l2_std_error
    ))
}

/// 6. Cartan-Muenzner admission, exact.
fn munzner_admission() -> Outcome {
    for name in ["iso_g1", "iso_g2"] {
        let FoliationModel::Isoparametric(m) = model(name) else { return Err(format!("{name} not isoparametric")) };
        validate_munzner(m.cartan(), m.g()).map_err(|e| format!("{name}: {e}"))?;
    }
    let c = config("cartan_g3").model;
    let f0: QPoly = parse_poly(c.f.as_ref().unwrap(), 5).unwrap();
    let surd = c.f_sqrt.as_ref().unwrap();
    let f1: QPoly = parse_poly(&surd.poly, 5).unwrap();
    let constant = validate_munzner(&CartanPolynomial::with_surd(f0.clone(), surd.radicand, f1.clone()), 3)
        .map_err(|e| format!("g = 3 candidate rejected: {e}"))?;
    check(constant.value() == 0.0, format!("g = 3 Laplacian constant {constant}"))?;
    check(
        validate_munzner(&CartanPolynomial::with_surd(f0, 2, f1), 3).is_err(),
        "g = 3 candidate with the wrong surd accepted",
    )?;
    match validate_munzner(&CartanPolynomial::rational(parse_poly("x1^2", 4).unwrap()), 2) {
        Err(ModelError::NotCartanMunzner { residual, .. }) => {
            check(residual != "0", "sabotage residual is zero")?;
            Ok(format!("g = 1, 2 and the g = 3 candidate admitted; x1^2 rejected with residual {residual}"))
        }
        other => Err(format!("x1^2 not rejected: {other:?}")),
    }
}

/// 7. Separation on every bundled model, and the {r^2} counterexample.
fn separation() -> Outcome {
    let ring = BasicRingSettings { crosscheck: false, ..BasicRingSettings::default() };
    let mut margins = Vec::new();
    for name in bundled_configs() {
        let c = config(&name);
        let m = build_model(&c.model).map_err(|e| e.to_string())?;
        let gens = discover_generators(&m, c.params.degree_cap.unwrap_or(4), &ring).map_err(|e| e.to_string())?;
        let s = SeparationSettings { num_pairs: 1000, seed: c.seed.unwrap_or(0), ..SeparationSettings::default() };
        let cert = separation_test(&m, &gens, &s).map_err(|e| e.to_string())?;
        check(
            cert.passed && cert.margin_ratio > 10.0,
            format!("{name}: {} failures, margin {:e}", cert.num_failures, cert.margin_ratio),
        )?;
        margins.push(format!("{name} {:.1e}", cert.margin_ratio));
    }
    let r2 = GeneratorSet::from_polys(4, vec![Polynomial::parse("x1^2 + x2^2 + x3^2 + x4^2", 4, ScalarMode::Exact).unwrap()], 2)
        .unwrap();
    let cert = separation_test(&model("t2"), &r2, &SeparationSettings::default()).map_err(|e| e.to_string())?;
    check(!cert.passed, "{r^2} passes on T2")?;
    let first = &cert.failures[0];
    check(
        first.p == [1.0, 0.0, 0.0, 0.0] && first.q == [0.0, 0.0, 1.0, 0.0],
        format!("first counterexample {:?} / {:?}", first.p, first.q),
    )?;
    Ok(format!("margins: {}; {{r^2}} on T2 fails at (1,0,0,0) vs (0,0,1,0)", margins.join(", ")))
}

/// 8. Byte-identical reports across repeated runs.
fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for name in bundled_configs() {
        let c = config(&name);
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = root.path().join(format!("{name}_{rep}"));
            let o = run(&c, Some(&out), None).map_err(|e| format!("{name}: {e}"))?;
            let mut contents = Vec::new();
            for a in &o.artifacts {
                contents.push((a.file_name().unwrap().to_owned(), std::fs::read(a).map_err(|e| e.to_string())?));
            }
            outputs.push(contents);
        }
        check(outputs[0] == outputs[1], format!("{name}: reports differ between runs"))?;
        files += outputs[0].len();
    }
    Ok(format!("{files} artifacts from {} configs identical across two runs", bundled_configs().len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("operator identities, exact regime", operator_identities),
        ("Molien oracle equivalence", molien_equivalence),
        ("generator discovery on known rings", generator_discovery),
        ("Monte Carlo versus exact leaf averages", cross_engine),
        ("structured polynomial recovery", structured_recovery),
        ("Cartan-Muenzner admission", munzner_admission),
        ("separation certificates", separation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
