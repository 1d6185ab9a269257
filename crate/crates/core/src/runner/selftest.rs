//! Property suite over the bundled configs, printed as a pass/fail matrix.

use std::path::Path;

use serde::Serialize;

use super::{build_model, RunConfig, RunError};
use crate::averaging::{identity_report, FitSettings};
use crate::basic_ring::{basic_subspace, discover_generators, generation_report, molien_dimensions, BasicRingSettings};
use crate::models::{FoliationModel, ModelError};
use crate::poly::random::random_homogeneous;
use crate::poly::{Polynomial, ScalarMode};
use crate::separation::{separation_test, SeparationSettings};
use crate::sphere::stream_rng;

/// Column order of the matrix.
pub const CHECKS: [&str; 4] = ["identities", "dims", "generators", "separation"];
const DIM_DEGREES: u32 = 4;
const SELFTEST_PAIRS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestRow {
    pub config: String,
    /// `pass`, `FAIL` or `skip`, in [`CHECKS`] order.
    pub cells: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub tol_rank: f64,
    pub rows: Vec<SelftestRow>,
    pub passed: bool,
}

impl SelftestReport {
    pub fn matrix(&self) -> String {
        let width = self.rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:width$}", "config");
        for c in CHECKS {
            out.push_str(&format!("  {c:>10}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:width$}", r.config));
            for c in &r.cells {
                out.push_str(&format!("  {c:>10}"));
            }
            out.push('\n');
            for n in &r.notes {
                out.push_str(&format!("    {n}\n"));
            }
        }
        out
    }
}

type Check = Result<Option<bool>, String>;

fn cell(c: &Check) -> String {
    match c {
        Ok(Some(true)) => "pass".into(),
        Ok(Some(false)) | Err(_) => "FAIL".into(),
        Ok(None) => "skip".into(),
    }
}

fn identities(model: &FoliationModel, seed: u64) -> Check {
    if !model.is_exact_engine() {
        return Ok(None);
    }
    let mut rng = stream_rng(seed, 0);
    for deg in 1..=4 {
        let f = random_homogeneous(model.dim(), deg, 5, &mut rng);
        let g = random_homogeneous(model.dim(), 2, 4, &mut rng);
        let (f, g) = match model.mode() {
            ScalarMode::Exact => (Polynomial::Exact(f), Polynomial::Exact(g)),
            ScalarMode::Float => (Polynomial::Float(f.to_float()), Polynomial::Float(g.to_float())),
        };
        let r = identity_report(model, &f, &g, &FitSettings::default()).map_err(|e| e.to_string())?;
        if let Some(c) = r.first_failure() {
            return Err(format!("{} residual {:e}", c.identity, c.residual));
        }
    }
    Ok(Some(true))
}

/// Floating-point `dim B_d` against an exact oracle: Molien for groups,
/// the exact engine for tori, and the free algebra on `r^2` and `F` for
/// isoparametric models.
fn dims(config: &RunConfig, model: &FoliationModel, settings: &BasicRingSettings) -> Check {
    let oracle: Vec<usize> = match model {
        FoliationModel::FiniteGroup(_) => molien_dimensions(model, DIM_DEGREES).map_err(|e| e.to_string())?[1..].to_vec(),
        FoliationModel::Isoparametric(m) => (1..=DIM_DEGREES)
            .map(|d| (0..=d / m.g()).filter(|b| (d - b * m.g()) % 2 == 0).count())
            .collect(),
        _ => (1..=DIM_DEGREES)
            .map(|d| basic_subspace(model, d, settings, None).map(|b| b.rank))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
    };
    let float_model = match model {
        FoliationModel::Isoparametric(_) => None,
        _ => {
            let mut c = config.model.clone();
            c.mode = ScalarMode::Float;
            Some(build_model(&c).map_err(|e| e.to_string())?)
        }
    };
    let probe = float_model.as_ref().unwrap_or(model);
    let found: Vec<usize> = (1..=DIM_DEGREES)
        .map(|d| basic_subspace(probe, d, settings, None).map(|b| b.rank))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if found == oracle {
        Ok(Some(true))
    } else {
        Err(format!("rank collapse or excess: dim B_d = {found:?}, oracle {oracle:?}"))
    }
}

fn generators(config: &RunConfig, model: &FoliationModel, settings: &BasicRingSettings) -> Check {
    let cap = config.params.degree_cap.unwrap_or(DIM_DEGREES);
    let gens = discover_generators(model, cap, settings).map_err(|e| e.to_string())?;
    let r = generation_report(model, &gens, cap, settings).map_err(|e| e.to_string())?;
    if r.passed {
        Ok(Some(true))
    } else {
        Err(format!("generation gaps at degrees {:?}", r.gap_degrees))
    }
}

fn separation(config: &RunConfig, model: &FoliationModel, settings: &BasicRingSettings, seed: u64) -> Check {
    let cap = config.params.degree_cap.unwrap_or(DIM_DEGREES);
    let gens = discover_generators(model, cap, settings).map_err(|e| e.to_string())?;
    let s = SeparationSettings { num_pairs: SELFTEST_PAIRS, seed, ..SeparationSettings::default() };
    let c = separation_test(model, &gens, &s).map_err(|e| e.to_string())?;
    if c.passed {
        Ok(Some(true))
    } else {
        Err(format!("{} failures, margin {:e}", c.num_failures, c.margin_ratio))
    }
}

/// Runs the property suite on every `*.toml` in `dir`. `tol_rank` overrides
/// the rank tolerance of all floating rank decisions.
pub fn selftest(dir: &Path, tol_rank: Option<f64>) -> Result<SelftestReport, RunError> {
    if !dir.is_dir() {
        return Err(RunError::Io(format!("bundled config directory {} not found", dir.display())));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(RunError::Io(format!("no configs in {}", dir.display())));
    }
    let d = BasicRingSettings::default();
    let settings = BasicRingSettings { tol_rank: tol_rank.unwrap_or(d.tol_rank), crosscheck: false, ..d };
    let mut rows = Vec::new();
    for path in paths {
        let config = RunConfig::load(&path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let seed = config.seed.unwrap_or(0);
        let checks: Vec<Check> = match build_model(&config.model) {
            Ok(model) => vec![
                identities(&model, seed),
                dims(&config, &model, &settings),
                generators(&config, &model, &settings),
                separation(&config, &model, &settings, seed),
            ],
            Err(RunError::Model(ModelError::NotCartanMunzner { identity, residual })) => {
                // rejected candidates are reported, not run
                vec![Ok(None), Ok(None), Ok(None), Err(format!("model rejected: {identity} residual {residual}"))]
            }
            Err(e) => return Err(e),
        };
        let notes = CHECKS.iter().zip(&checks).filter_map(|(n, c)| c.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
        rows.push(SelftestRow { config: name, cells: checks.iter().map(cell).collect(), notes });
    }
    let passed = rows.iter().all(|r| r.cells.iter().all(|c| c != "FAIL"));
    Ok(SelftestReport { tol_rank: settings.tol_rank, rows, passed })
}
