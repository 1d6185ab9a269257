//! Run configuration: one TOML file per run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::RunError;
use crate::models::{
    group_closure, CartanPolynomial, EstimatorParams, FiniteGroupModel, FoliationModel, IsoparametricModel, Matrix,
    TorusModel,
};
use crate::poly::{parse_poly, Polynomial, QPoly, Rational, Scalar, ScalarMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Avg,
    Generators,
    Verify,
    Separate,
    Export,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Avg => "avg",
            Task::Generators => "generators",
            Task::Verify => "verify",
            Task::Separate => "separate",
            Task::Export => "export",
        }
    }
}

impl FromStr for Task {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "avg" => Ok(Task::Avg),
            "generators" => Ok(Task::Generators),
            "verify" => Ok(Task::Verify),
            "separate" => Ok(Task::Separate),
            "export" => Ok(Task::Export),
            other => Err(RunError::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FiniteGroup,
    Torus,
    Isoparametric,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurdConfig {
    pub radicand: u32,
    pub poly: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryConfig {
    pub weight_matrix: Vec<Vec<i64>>,
    #[serde(default)]
    pub n_fix: usize,
}

fn rational_mode() -> ScalarMode {
    ScalarMode::Exact
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub name: Option<String>,
    #[serde(default = "rational_mode")]
    pub mode: ScalarMode,
    pub dim: Option<usize>,
    /// Finite groups: generator matrices, row-major, entries as `"p/q"` or decimals.
    pub generators: Option<Vec<Vec<String>>>,
    pub max_group_size: Option<usize>,
    /// Tori: one row per plane, one column per circle factor.
    pub weight_matrix: Option<Vec<Vec<i64>>>,
    pub n_fix: Option<usize>,
    /// Isoparametric: the rational part of `F`.
    #[serde(rename = "F")]
    pub f: Option<String>,
    /// Isoparametric: `F = F + sqrt(radicand) * poly`.
    #[serde(rename = "F_sqrt")]
    pub f_sqrt: Option<SurdConfig>,
    pub g: Option<u32>,
    #[serde(rename = "N")]
    pub samples: Option<usize>,
    pub h: Option<f64>,
    pub tol_level: Option<f64>,
    pub min_ess: Option<f64>,
    pub workers: Option<usize>,
    pub symmetry: Option<SymmetryConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    /// Polynomial to average.
    pub f: Option<String>,
    /// Second polynomial of the identity checks; defaults to `f`.
    pub g: Option<String>,
    /// Known basic generators for a structured fit.
    pub fit_generators: Option<Vec<String>>,
    /// Degree cap.
    #[serde(rename = "D")]
    pub degree_cap: Option<u32>,
    /// Generator file, relative to the config file.
    pub generators_file: Option<PathBuf>,
    pub num_pairs: Option<usize>,
    pub tol_same: Option<f64>,
    pub margin_min: Option<f64>,
    pub num_samples: Option<usize>,
    pub tol_rank: Option<f64>,
    pub crosscheck: Option<bool>,
    pub oversample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: Option<u64>,
    /// Output directory, relative to the working directory.
    pub out: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub params: TaskParams,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn parse_entry<S: Scalar>(text: &str) -> Result<S, RunError> {
    let t = text.trim();
    if let Ok(q) = Rational::from_str(t) {
        return Ok(S::from_rational(&q));
    }
    match (S::MODE, f64::from_str(t)) {
        (ScalarMode::Float, Ok(v)) => Ok(S::from_f64(v)),
        (ScalarMode::Exact, Ok(_)) => {
            Err(RunError::Config(format!("matrix entry `{t}` is a decimal; rational mode needs `p/q` entries")))
        }
        _ => Err(RunError::Config(format!("cannot parse matrix entry `{t}`"))),
    }
}

fn group<S: Scalar>(c: &ModelConfig) -> Result<FiniteGroupModel<S>, RunError> {
    let gens = c.generators.as_ref().ok_or_else(|| missing("model.generators"))?;
    let mut mats = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        let n = (g.len() as f64).sqrt().round() as usize;
        if n * n != g.len() {
            return Err(RunError::Config(format!("generator {} has {} entries, not a square", i + 1, g.len())));
        }
        if let Some(d) = c.dim {
            if d != n {
                return Err(RunError::Config(format!("generator {} is {n}x{n} but dim = {d}", i + 1)));
            }
        }
        let entries = g.iter().map(|e| parse_entry::<S>(e)).collect::<Result<Vec<S>, _>>()?;
        mats.push(Matrix::from_row_major(n, entries)?);
    }
    let mut m = group_closure(mats, c.max_group_size.unwrap_or(10_000))?;
    if let Some(name) = &c.name {
        m = m.with_name(name.clone());
    }
    Ok(m)
}

fn missing(key: &str) -> RunError {
    RunError::Config(format!("missing required key `{key}`"))
}

/// Builds and admits the configured model.
pub fn build_model(c: &ModelConfig) -> Result<FoliationModel, RunError> {
    let model = match c.kind {
        ModelKind::FiniteGroup => match c.mode {
            ScalarMode::Exact => FoliationModel::FiniteGroup(group::<Rational>(c)?),
            ScalarMode::Float => FoliationModel::FiniteGroupFloat(group::<f64>(c)?),
        },
        ModelKind::Torus => {
            let w = c.weight_matrix.clone().ok_or_else(|| missing("model.weight_matrix"))?;
            let mut t = TorusModel::new(w, c.n_fix.unwrap_or(0), c.mode)?;
            if let Some(d) = c.dim {
                if d != t.dim() {
                    return Err(RunError::Config(format!("weight_matrix gives dimension {} but dim = {d}", t.dim())));
                }
            }
            if let Some(name) = &c.name {
                t = t.with_name(name.clone());
            }
            FoliationModel::Torus(t)
        }
        ModelKind::Isoparametric => {
            let dim = c.dim.ok_or_else(|| missing("model.dim"))?;
            let text = c.f.as_ref().ok_or_else(|| missing("model.F"))?;
            let f0: QPoly = parse_poly(text, dim)?;
            let cartan = match &c.f_sqrt {
                Some(s) => CartanPolynomial::with_surd(f0, s.radicand, parse_poly(&s.poly, dim)?),
                None => CartanPolynomial::rational(f0),
            };
            let d = EstimatorParams::default();
            let params = EstimatorParams {
                samples: c.samples.unwrap_or(d.samples),
                bandwidth: c.h.unwrap_or(d.bandwidth),
                tol_level: c.tol_level.unwrap_or(d.tol_level),
                min_ess: c.min_ess.unwrap_or(d.min_ess),
                workers: c.workers.unwrap_or(d.workers),
            };
            let g = c.g.ok_or_else(|| missing("model.g"))?;
            let mut m = IsoparametricModel::new(cartan, g, params)?;
            if let Some(s) = &c.symmetry {
                m = m.with_symmetry(TorusModel::new(s.weight_matrix.clone(), s.n_fix, ScalarMode::Exact)?)?;
            }
            if let Some(name) = &c.name {
                m = m.with_name(name.clone());
            }
            FoliationModel::Isoparametric(m)
        }
    };
    Ok(model)
}

/// Parses a task polynomial in the model's dimension and scalar mode.
pub fn parse_task_poly(model: &FoliationModel, text: &str) -> Result<Polynomial, RunError> {
    Ok(Polynomial::parse(text, model.dim(), model.mode())?)
}
