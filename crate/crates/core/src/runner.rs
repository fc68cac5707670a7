//! Command dispatch, run manifests and output files.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dynamics::{DynamicsError, SimulationOutput, Simulator};
use crate::ensemble::VortexEnsemble;
use crate::kernels::{KernelError, TorusKernel};
use crate::random::{sample_forcing, sample_xi, stream_rng, tags, INTENSITY_FLOOR, QUADRATURE_TOL};
use crate::spectral::{battery, delta_norm_sq, delta_tail_bound};
use crate::stats::mean_stderr;
use crate::verify::{self, Criterion, EstimatorReport, ReferenceKind, VerifyContext};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sample,
    /// Named checks; `all` or an empty list runs every check.
    Verify(Vec<String>),
    KernelCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sample => "sample",
            Command::Verify(_) => "verify",
            Command::KernelCheck => "kernel-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("path {path}: {source}")]
    Dynamics { path: usize, source: DynamicsError },
    #[error("unknown verify check {0:?}")]
    UnknownCheck(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Kernel(_) => "kernel",
            RunError::Dynamics { .. } => "dynamics",
            RunError::UnknownCheck(_) => "unknown-check",
            RunError::Io { .. } => "io",
        }
    }

    /// Machine-readable form printed by the binary.
    pub fn to_json(&self) -> String {
        let key = match self {
            RunError::Config(e) => e.key().map(str::to_string),
            _ => None,
        };
        serde_json::json!({ "error": { "kind": self.kind(), "key": key, "message": self.to_string() } }).to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationBounds {
    /// Mass of `‖δ‖²_{H^{-1-s}}` beyond the cutoff, bounding the Sobolev norm error per unit atom.
    pub sobolev_tail: f64,
    /// Second-moment mass dropped when `M = ∞` is truncated.
    pub infinite_m_tail: f64,
    pub quadrature_tol: f64,
    pub intensity_floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestSummary {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub status: &'static str,
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub truncation: TruncationBounds,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: Option<f64>,
    pub files: Vec<String>,
    pub tests: Vec<TestSummary>,
    pub all_passed: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub all_passed: bool,
    pub files: Vec<PathBuf>,
    pub reports: Vec<EstimatorReport>,
}

struct Output<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<fs::File>), RunError> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        if !self.files.contains(&path) {
            self.files.push(path.clone());
        }
        Ok((path, BufWriter::new(file)))
    }

    /// Writes `text` to `name`; the first line of `text` must carry the config hash.
    fn write(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        let (path, mut w) = self.create(name)?;
        w.write_all(text.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|source| RunError::Io { path, source })
    }

    fn csv_header(&self) -> String {
        format!("# config_hash={}\n", self.hash)
    }

    fn jsonl_header(&self, kind: &str) -> String {
        format!("{}\n", serde_json::json!({ "config_hash": self.hash, "kind": kind }))
    }

    /// `{"config_hash":…,` on the first line, then `key` holding `value`.
    fn json_with_header<T: Serialize>(&self, key: &str, value: &T) -> String {
        format!(
            "{{\"config_hash\":\"{}\",\n\"{key}\":{}}}\n",
            self.hash,
            serde_json::to_string_pretty(value).expect("serialisable")
        )
    }
}

fn truncation(cfg: &RunConfig) -> TruncationBounds {
    let alpha = -1.0 - cfg.sobolev_delta;
    TruncationBounds {
        sobolev_tail: delta_tail_bound(alpha, cfg.k_max),
        infinite_m_tail: cfg.law_params().truncation_tail(delta_norm_sq(alpha, cfg.k_max)),
        quadrature_tol: QUADRATURE_TOL,
        intensity_floor: INTENSITY_FLOOR,
    }
}

/// Runs `command` with outputs under `cfg.output_dir`. A manifest is written before
/// the work starts and rewritten when it finishes or fails.
pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let mut out = Output {
        dir: &dir,
        hash: cfg.hash(),
        files: Vec::new(),
    };
    let started = Instant::now();
    let mut manifest = RunManifest {
        status: "started",
        command: match command {
            Command::Verify(names) if !names.is_empty() => format!("verify {}", names.join(" ")),
            c => c.name().to_string(),
        },
        version: VERSION,
        config: cfg.clone(),
        truncation: truncation(cfg),
        started_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        wall_clock_seconds: None,
        files: Vec::new(),
        tests: Vec::new(),
        all_passed: None,
        error: None,
    };
    let text = out.json_with_header("manifest", &manifest);
    out.write("manifest.json", &text)?;

    let result = match command {
        Command::Simulate => run_simulate(cfg, &mut out),
        Command::Sample => run_sample(cfg, &mut out),
        Command::Verify(names) => run_verify(cfg, names, &mut out),
        Command::KernelCheck => run_kernel_check(cfg, &mut out),
    };
    manifest.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    match &result {
        Ok(reports) => {
            manifest.status = "finished";
            manifest.tests = reports
                .iter()
                .map(|r| TestSummary {
                    name: r.name.clone(),
                    pass: r.pass,
                })
                .collect();
            manifest.all_passed = Some(reports.iter().all(|r| r.pass));
        }
        Err(e) => {
            manifest.status = "failed";
            manifest.error = Some(e.to_string());
        }
    }
    manifest.files = out.files.iter().map(|p| p.display().to_string()).collect();
    let text = out.json_with_header("manifest", &manifest);
    out.write("manifest.json", &text)?;
    let reports = result?;
    Ok(RunOutcome {
        all_passed: reports.iter().all(|r| r.pass),
        files: out.files,
        reports,
    })
}

/// Quotes a CSV field when it contains a separator or quote.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_reports(out: &mut Output, reports: &[EstimatorReport]) -> Result<(), RunError> {
    let mut json = format!("{{\"config_hash\":\"{}\",\n\"reports\":[\n", out.hash);
    for (i, r) in reports.iter().enumerate() {
        json.push_str(&serde_json::to_string(r).expect("serialisable"));
        json.push_str(if i + 1 < reports.len() { ",\n" } else { "\n" });
    }
    json.push_str("]}\n");
    out.write("report.json", &json)?;
    let mut csv = out.csv_header();
    csv.push_str("name,estimate,stderr,reference,pass,reference_kind,n_samples\n");
    for r in reports {
        let kind = serde_json::to_value(r.reference_kind).expect("serialisable");
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{},{},{}\n",
            csv_field(&r.name),
            r.point_estimate,
            r.stderr,
            r.reference_value,
            r.pass,
            kind.as_str().unwrap_or_default(),
            r.n_samples
        ));
    }
    out.write("summary.csv", &csv)
}

#[derive(Serialize)]
struct SnapshotLine<'a> {
    path: usize,
    time: f64,
    ensemble: &'a VortexEnsemble,
}

fn run_simulate(cfg: &RunConfig, out: &mut Output) -> Result<Vec<EstimatorReport>, RunError> {
    let kernel = TorusKernel::new(cfg.kernel_config())?;
    let params = cfg.law_params();
    let sim = Simulator::new(&kernel, params, cfg.integrator()).map_err(|source| RunError::Dynamics { path: 0, source })?;
    let snaps = cfg.snapshot_grid();
    let tests = battery();
    let runs: Vec<Result<SimulationOutput, DynamicsError>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let initial = sample_xi(&params, &mut stream_rng(cfg.seed, tags::XI, i as u64));
            let forcing = sample_forcing(&params, cfg.t_end, &mut stream_rng(cfg.seed, tags::FORCING, i as u64));
            sim.simulate(&initial, &forcing, &snaps, &tests)
        })
        .collect();
    let mut outputs = Vec::with_capacity(runs.len());
    for (path, r) in runs.into_iter().enumerate() {
        outputs.push(r.map_err(|source| RunError::Dynamics { path, source })?);
    }

    let mut text = out.jsonl_header("snapshots");
    for (path, o) in outputs.iter().enumerate() {
        for s in &o.snapshots {
            let line = SnapshotLine {
                path,
                time: s.time,
                ensemble: &s.ensemble,
            };
            text.push_str(&serde_json::to_string(&line).expect("serialisable"));
            text.push('\n');
        }
    }
    out.write("snapshots.jsonl", &text)?;

    let mut csv = out.csv_header();
    csv.push_str("path,time,n_vortices,min_pair_distance,lyapunov,steps\n");
    for (path, o) in outputs.iter().enumerate() {
        for d in &o.diagnostics {
            csv.push_str(&format!(
                "{path},{},{},{:e},{:e},{}\n",
                d.time, d.n_vortices, d.min_pair_distance, d.lyapunov, d.steps
            ));
        }
    }
    out.write("diagnostics.csv", &csv)?;

    let mut csv = out.csv_header();
    csv.push_str("path,time,function,pairing,integral_residual,variation_residual,scale\n");
    for (path, o) in outputs.iter().enumerate() {
        for w in &o.weak_form {
            csv.push_str(&format!(
                "{path},{},{},{:e},{:e},{:e},{:e}\n",
                w.time, csv_field(&w.function), w.pairing, w.integral_residual, w.variation_residual, w.scale
            ));
        }
    }
    out.write("weak_form.csv", &csv)?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct SampleLine<'a> {
    index: usize,
    ensemble: &'a VortexEnsemble,
}

/// Draws from `Ξ_M/√N`, plus a second-moment self-check per battery function.
fn run_sample(cfg: &RunConfig, out: &mut Output) -> Result<Vec<EstimatorReport>, RunError> {
    let params = cfg.law_params();
    let draws: Vec<VortexEnsemble> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| sample_xi(&params, &mut stream_rng(cfg.seed, tags::XI, i as u64)))
        .collect();
    let mut text = out.jsonl_header("samples");
    for (index, ensemble) in draws.iter().enumerate() {
        text.push_str(&serde_json::to_string(&SampleLine { index, ensemble }).expect("serialisable"));
        text.push('\n');
    }
    out.write("samples.jsonl", &text)?;

    let (l, th) = (params.lambda, params.theta);
    let m2_unit = l / (2.0 * th) * (1.0 - (-2.0 * th * params.m_eff()).exp());
    let reports: Vec<EstimatorReport> = battery()
        .iter()
        .map(|f| {
            let sq: Vec<f64> = draws.iter().map(|w| f.pair(w).powi(2)).collect();
            EstimatorReport::new(
                format!("sample/second-moment/{}", f.name),
                mean_stderr(&sq),
                m2_unit * f.l2_norm_sq(),
                ReferenceKind::ClosedForm,
                Criterion::SigmaBand { budget: 0.0 },
                "E<f,Xi>^2 against (lambda/2 theta)(1 - e^(-2 theta M))|f|^2",
            )
        })
        .collect();
    write_reports(out, &reports)?;
    Ok(reports)
}

fn run_verify(cfg: &RunConfig, names: &[String], out: &mut Output) -> Result<Vec<EstimatorReport>, RunError> {
    let mut ctx = VerifyContext::new(cfg.kernel_config(), cfg.mc_k_max, cfg.seed)?;
    ctx.rel_tol = cfg.rel_tol.unwrap_or(ctx.rel_tol);
    ctx.abs_tol = cfg.abs_tol.unwrap_or(ctx.abs_tol);
    ctx.max_step = cfg.max_step;
    ctx.sample_scale = cfg.sample_scale;
    ctx.sobolev_delta = cfg.sobolev_delta;
    ctx.collision_policy = cfg.collision_policy;
    let selected: Vec<&str> = if names.is_empty() || names.iter().any(|n| n == "all") {
        verify::TEST_NAMES.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    if let Some(bad) = selected.iter().find(|n| !verify::TEST_NAMES.contains(n)) {
        return Err(RunError::UnknownCheck(bad.to_string()));
    }
    let mut reports = Vec::new();
    for name in selected {
        reports.extend(verify::run_named(&ctx, name).expect("name checked above"));
    }
    write_reports(out, &reports)?;
    Ok(reports)
}

fn run_kernel_check(cfg: &RunConfig, out: &mut Output) -> Result<Vec<EstimatorReport>, RunError> {
    let kernel = TorusKernel::new(cfg.kernel_config())?;
    let mut csv = out.csv_header();
    csv.push_str("d,k_norm,d_k_norm,fd_error\n");
    for r in verify::kernel_sweep(&kernel, 200, 1e-5) {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.d, r.k_norm, r.d_k, r.fd_error));
    }
    out.write("kernel_check.csv", &csv)?;
    let ctx = VerifyContext::new(cfg.kernel_config(), cfg.mc_k_max, cfg.seed)?;
    let reports = verify::test_kernel_consistency(&ctx, &verify::KernelConsistency::default());
    write_reports(out, &reports)?;
    Ok(reports)
}
