//! Config-driven runs behind the `leafavg` binary: build a model, run one
//! task, write JSON reports and CSV tables, and decide pass or fail.

mod config;
mod selftest;

pub use config::{build_model, parse_task_poly, ModelConfig, ModelKind, RunConfig, SurdConfig, SymmetryConfig, Task, TaskParams};
pub use selftest::{selftest, SelftestReport, SelftestRow};

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::averaging::{
    average, average_structured, identity_report, AveragingCertificate, AveragingError, FitSettings, IdentityReport,
    StructuredFit,
};
use crate::basic_ring::{
    discover_generators, generation_report, molien_dimensions, BasicRingError, BasicRingSettings, GenerationReport,
    GeneratorSet,
};
use crate::models::{FoliationModel, ModelError};
use crate::poly::{PolyError, Polynomial};
use crate::separation::{quotient_image_export, separation_test, SeparationCertificate, SeparationError, SeparationSettings};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
    #[error(transparent)]
    BasicRing(#[from] BasicRingError),
    #[error(transparent)]
    Separation(#[from] SeparationError),
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub task: Task,
    pub passed: bool,
    /// One line for standard output.
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 on pass, 2 on a failed certificate.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    model: FoliationModel,
    out: PathBuf,
    seed: Option<u64>,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        std::fs::create_dir_all(&self.out).map_err(|e| RunError::Io(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, &text)
    }

    fn require_seed(&self, why: &str) -> Result<u64, RunError> {
        self.seed.ok_or_else(|| RunError::Config(format!("`seed` is required: {why} is stochastic")))
    }

    fn params(&self) -> &TaskParams {
        &self.config.params
    }

    fn degree_cap(&self) -> Result<u32, RunError> {
        self.params().degree_cap.ok_or_else(|| RunError::Config("missing required key `params.D`".into()))
    }

    fn fit_settings(&self, seed: u64) -> FitSettings {
        let d = FitSettings::default();
        FitSettings { seed, oversample: self.params().oversample.unwrap_or(d.oversample), ..d }
    }

    fn ring_settings(&self) -> Result<BasicRingSettings, RunError> {
        let d = BasicRingSettings::default();
        let crosscheck = self.params().crosscheck.unwrap_or(true) && !self.model.is_exact_engine();
        let seed = if crosscheck { self.require_seed("the Monte Carlo cross-check")? } else { self.seed.unwrap_or(0) };
        Ok(BasicRingSettings {
            tol_rank: self.params().tol_rank.unwrap_or(d.tol_rank),
            fit: self.fit_settings(seed),
            crosscheck,
            ..d
        })
    }

    /// Generators from `params.generators_file`, or discovered up to `params.D`.
    fn generators(&self) -> Result<GeneratorSet, RunError> {
        match &self.params().generators_file {
            Some(p) => {
                let path = self.config.resolve(p);
                let text = std::fs::read_to_string(&path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
                Ok(GeneratorSet::from_json(&text)?)
            }
            None => Ok(discover_generators(&self.model, self.degree_cap()?, &self.ring_settings()?)?),
        }
    }
}

/// Runs one configured task. `out` and `seed` override the config.
pub fn run(config: &RunConfig, out: Option<&Path>, seed: Option<u64>) -> Result<RunOutcome, RunError> {
    let model = build_model(&config.model)?;
    let out = out.map(Path::to_path_buf).or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut ctx = Ctx { config, model, out, seed: seed.or(config.seed), artifacts: Vec::new() };
    let (passed, summary) = match config.task {
        Task::Avg => run_avg(&mut ctx)?,
        Task::Generators => run_generators(&mut ctx)?,
        Task::Verify => run_verify(&mut ctx)?,
        Task::Separate => run_separate(&mut ctx)?,
        Task::Export => run_export(&mut ctx)?,
    };
    Ok(RunOutcome {
        task: config.task,
        passed,
        summary: format!("{} {}: {} ({summary})", config.task.name(), ctx.model.name(), verdict(passed)),
        artifacts: ctx.artifacts,
    })
}

#[derive(Serialize)]
struct AvgReport<'a> {
    task: &'static str,
    model: &'a str,
    seed: Option<u64>,
    samples: Option<usize>,
    certificate: AveragingCertificate,
    identities: IdentityReport,
    structured: Option<StructuredFit>,
    structured_error: Option<String>,
    passed: bool,
}

fn run_avg(ctx: &mut Ctx) -> Result<(bool, String), RunError> {
    let text = ctx.params().f.clone().ok_or_else(|| RunError::Config("missing required key `params.f`".into()))?;
    let f = parse_task_poly(&ctx.model, &text)?;
    let g = match &ctx.params().g {
        Some(t) => parse_task_poly(&ctx.model, t)?,
        None => f.clone(),
    };
    let (seed, samples) = match &ctx.model {
        FoliationModel::Isoparametric(m) => (Some(ctx.require_seed("Monte Carlo averaging")?), Some(m.params().samples)),
        _ => (None, None),
    };
    let settings = ctx.fit_settings(seed.unwrap_or(0));
    let certificate = average(&ctx.model, &f, &settings)?;
    let identities = identity_report(&ctx.model, &f, &g, &settings)?;
    let (structured, structured_error) = match (&ctx.params().fit_generators, &ctx.model) {
        (Some(gens), FoliationModel::Isoparametric(_)) => {
            let gens = gens.iter().map(|t| parse_task_poly(&ctx.model, t)).collect::<Result<Vec<Polynomial>, _>>()?;
            match average_structured(&ctx.model, &f, &gens, &settings) {
                Ok(s) => (Some(s), None),
                Err(e @ AveragingError::BasisDeficient { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        (Some(_), _) => return Err(RunError::Config("fit_generators applies to isoparametric models only".into())),
        _ => (None, None),
    };
    let structured_ok = structured_error.is_none() && structured.as_ref().is_none_or(|s| s.comparison.within_two_std_errors);
    let passed = identities.passed && structured_ok;
    let mut summary = format!("[f] = {}", certificate.output);
    if let Some(s) = &structured {
        let coeffs: Vec<String> = s.coefficients.iter().map(|c| format!("{c:.4}")).collect();
        summary.push_str(&format!("; structured coefficients [{}]", coeffs.join(", ")));
    }
    let model_name = ctx.model.name().to_string();
    let report = AvgReport {
        task: "avg",
        model: &model_name,
        seed,
        samples,
        certificate,
        identities,
        structured,
        structured_error,
        passed,
    };
    ctx.write_json("avg_certificate.json", &report)?;
    Ok((passed, summary))
}

#[derive(Serialize)]
struct GeneratorsReport<'a> {
    task: &'static str,
    model: &'a str,
    degree_cap: u32,
    degrees: Vec<u32>,
    generators: Vec<String>,
    basic_dims: Vec<usize>,
    molien_dims: Option<Vec<usize>>,
    molien_match: Option<bool>,
    crosschecks_passed: bool,
    generation: GenerationReport,
    warnings: Vec<String>,
    passed: bool,
}

fn run_generators(ctx: &mut Ctx) -> Result<(bool, String), RunError> {
    let cap = ctx.degree_cap()?;
    let settings = ctx.ring_settings()?;
    let gens = discover_generators(&ctx.model, cap, &settings)?;
    let generation = generation_report(&ctx.model, &gens, cap, &settings)?;
    let molien_dims = match &ctx.model {
        FoliationModel::FiniteGroup(_) => Some(molien_dimensions(&ctx.model, cap)?[1..].to_vec()),
        _ => None,
    };
    let molien_match = molien_dims.as_ref().map(|m| *m == gens.basic_dims);
    let crosschecks_passed = gens.provenance.crosschecks.iter().flatten().all(|c| c.passed);
    let passed = generation.passed && molien_match != Some(false) && crosschecks_passed;
    let summary = format!("{} generators, degrees {:?}", gens.len(), gens.degrees());
    let model_name = ctx.model.name().to_string();
    let report = GeneratorsReport {
        task: "generators",
        model: &model_name,
        degree_cap: cap,
        degrees: gens.degrees(),
        generators: gens.generators.iter().map(|g| g.poly.to_string()).collect(),
        basic_dims: gens.basic_dims.clone(),
        molien_dims,
        molien_match,
        crosschecks_passed,
        generation,
        warnings: gens.warnings.clone(),
        passed,
    };
    let mut text = gens.to_json();
    text.push('\n');
    ctx.write("generators.json", &text)?;
    ctx.write_json("generators_report.json", &report)?;
    Ok((passed, summary))
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    task: &'static str,
    model: &'a str,
    generators_file: String,
    degree_cap: u32,
    generation: GenerationReport,
    /// `IdentityViolation` or `GenerationGap` when the check fails.
    violation_kind: Option<&'static str>,
    violation: Option<String>,
    passed: bool,
}

fn run_verify(ctx: &mut Ctx) -> Result<(bool, String), RunError> {
    let file = ctx
        .params()
        .generators_file
        .clone()
        .ok_or_else(|| RunError::Config("missing required key `params.generators_file`".into()))?;
    let gens = ctx.generators()?;
    let cap = ctx.params().degree_cap.unwrap_or(gens.degree_cap);
    let settings = BasicRingSettings { crosscheck: false, ..ctx.ring_settings().unwrap_or_default() };
    let generation = generation_report(&ctx.model, &gens, cap, &settings)?;
    let (violation_kind, violation) = if let Some(m) = generation.membership.iter().find(|m| !m.passed) {
        let e = AveragingError::IdentityViolation { identity: format!("[rho_{0}] = rho_{0}", m.index + 1), residual: m.residual };
        (Some("IdentityViolation"), Some(e.to_string()))
    } else if !generation.gap_degrees.is_empty() {
        let e = BasicRingError::GenerationGap { degrees: generation.gap_degrees.clone(), max_residual: generation.max_residual };
        (Some("GenerationGap"), Some(e.to_string()))
    } else {
        (None, None)
    };
    let passed = violation.is_none();
    let summary = match &violation {
        Some(v) => format!("{}: {v}", violation_kind.unwrap_or_default()),
        None => format!("{} generators span B_d for d <= {cap}", gens.len()),
    };
    let model_name = ctx.model.name().to_string();
    let report = VerifyReport {
        task: "verify",
        model: &model_name,
        generators_file: file.display().to_string(),
        degree_cap: cap,
        generation,
        violation_kind,
        violation,
        passed,
    };
    ctx.write_json("verify_report.json", &report)?;
    Ok((passed, summary))
}

fn run_separate(ctx: &mut Ctx) -> Result<(bool, String), RunError> {
    let seed = ctx.require_seed("separation sampling")?;
    let gens = ctx.generators()?;
    let d = SeparationSettings::default();
    let p = ctx.params();
    let settings = SeparationSettings {
        num_pairs: p.num_pairs.unwrap_or(d.num_pairs),
        tol_same: p.tol_same.unwrap_or(d.tol_same),
        margin_min: p.margin_min.unwrap_or(d.margin_min),
        seed,
        ..d
    };
    let cert: SeparationCertificate = separation_test(&ctx.model, &gens, &settings)?;
    let summary = format!(
        "{} same-leaf and {} distinct-leaf pairs, margin {:.3e}, {} failures",
        cert.num_same_pairs, cert.num_distinct_pairs, cert.margin_ratio, cert.num_failures
    );
    ctx.write_json("separation_certificate.json", &cert)?;
    Ok((cert.passed, summary))
}

fn run_export(ctx: &mut Ctx) -> Result<(bool, String), RunError> {
    let seed = ctx.require_seed("quotient export sampling")?;
    let gens = ctx.generators()?;
    let n = ctx.params().num_samples.unwrap_or(1000);
    let table = quotient_image_export(&gens, Some(&ctx.model), n, seed)?;
    ctx.write("quotient_image.csv", &table.to_csv())?;
    Ok((true, format!("{n} samples of rho(S^{}) with seed {seed}", ctx.model.dim() - 1)))
}
