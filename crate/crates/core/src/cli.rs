//! `jumpconv` batch runner: TOML experiment configs in, CSV and JSON out.
//!
//! Exit codes: 0 success, 2 config error, 3 IO error, 4 hypothesis
//! violation, 5 non-finite statistic, 1 internal error.

use crate::error::Error;
use crate::prm::{self, MarkSpace};
use crate::quad::QuadConfig;
use crate::rng;
use crate::sconv::{ConvolutionScenario, GridSpec, ScenarioIntegrand};
use crate::sgp::{Generator, GeneratorKind};
use crate::sint::{self, Coefficient, FieldIntegrand, StepIntegrand};
use crate::space::{Point, SmoothSpace};
use crate::verify::{self, ExperimentConfig, InequalityReport, Mode};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_HYPOTHESIS: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "jumpconv", version, about = "Monte Carlo experiments for stochastic convolutions driven by Poisson random measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write sampled event paths (or integral / convolution paths) as CSV.
    Sample(RunManifest),
    /// Run one experiment and write report.json and report.csv.
    Verify(RunManifest),
    /// Run a cartesian grid of experiments into sweep.csv, resuming a partial run.
    Sweep(RunManifest),
}

/// Options shared by all subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunManifest {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "JUMPCONV_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("non-finite result: {0}")]
    Numeric(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Hypothesis(_) => EXIT_HYPOTHESIS,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(m) => CliError::Config(m),
            Error::NotContractive(m) => CliError::Config(format!("generator rejected: {m}")),
            Error::Hypothesis(m) => CliError::Hypothesis(m),
            Error::Numeric(m) => CliError::Numeric(m),
            Error::Internal(m) => CliError::Internal(m),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Top-level config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    pub seed: Option<u64>,
    pub marks: MarksConfig,
    pub space: Option<SpaceConfig>,
    pub generator: Option<GeneratorKind>,
    pub integrand: Option<IntegrandSpec>,
    pub grid: Option<GridConfig>,
    pub sample: Option<SampleConfig>,
    pub verify: Option<VerifyConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksConfig {
    pub weights: Vec<f64>,
    pub names: Option<Vec<String>>,
    pub horizon: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub d: usize,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default = "two")]
    pub p: f64,
}

/// Integrand families available from configs; vectors are listed per mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    /// `ξ(t, z_k) = values[k]`.
    Constant { values: Vec<Vec<f64>> },
    /// `ξ(t, z_k) = Σ_j coeffs[k][j] t^j`.
    Polynomial { coeffs: Vec<Vec<Vec<f64>>> },
    /// `ξ(t, z_k) = base[k] + amplitude[k] sin(ω t)`.
    Sinusoidal { base: Vec<Vec<f64>>, amplitude: Vec<Vec<f64>>, omega: f64 },
    /// `ξ(t, z_k) = values[i][k]` on `(breakpoints[i], breakpoints[i+1]]`.
    Step { breakpoints: Vec<f64>, values: Vec<Vec<Vec<f64>>> },
}

fn points(v: &[Vec<f64>]) -> Vec<Point> {
    v.iter().map(|x| Point::from_column_slice(x)).collect()
}

impl IntegrandSpec {
    pub fn build(&self) -> crate::Result<ScenarioIntegrand> {
        Ok(match self {
            IntegrandSpec::Constant { values } => ScenarioIntegrand::Field(FieldIntegrand::constant(points(values))?),
            IntegrandSpec::Polynomial { coeffs } => ScenarioIntegrand::Field(FieldIntegrand::polynomial(
                coeffs.iter().map(|c| points(c)).collect(),
            )?),
            IntegrandSpec::Sinusoidal { base, amplitude, omega } => ScenarioIntegrand::Field(
                FieldIntegrand::sinusoidal(points(base), points(amplitude), *omega)?,
            ),
            IntegrandSpec::Step { breakpoints, values } => {
                let n_marks = values.first().map_or(0, |v| v.len());
                let dim = values.first().and_then(|v| v.first()).map_or(0, |x| x.len());
                let cells = values
                    .iter()
                    .map(|per_mark| {
                        per_mark
                            .iter()
                            .enumerate()
                            .map(|(k, v)| {
                                (
                                    crate::prm::MarkSet::single(n_marks, k),
                                    Coefficient::Fixed(Point::from_column_slice(v)),
                                )
                            })
                            .collect()
                    })
                    .collect();
                ScenarioIntegrand::Step(StepIntegrand::new(dim, breakpoints.clone(), cells)?)
            }
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub count: Option<usize>,
    pub times: Option<Vec<f64>>,
    /// Simpson panel width; defaults to `horizon / 4096`.
    pub quad_h: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOutput {
    #[default]
    Events,
    Integral,
    Convolution,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n_paths: usize,
    #[serde(default)]
    pub output: SampleOutput,
}

/// Experiment selected by `[verify] mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    UpperRange,
    FullRange,
    CompensatorForm,
    Stopped,
    HigherMoment,
    Isometry,
    LayerCake,
    StepApprox,
}

impl VerifyMode {
    fn inequality(&self) -> Option<Mode> {
        match self {
            VerifyMode::UpperRange => Some(Mode::UpperRange),
            VerifyMode::FullRange => Some(Mode::FullRange),
            VerifyMode::CompensatorForm => Some(Mode::CompensatorForm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub mode: VerifyMode,
    pub q_prime: OneOrMany,
    pub n_paths: usize,
    pub t_eval: Option<f64>,
    pub lambda_threshold: Option<f64>,
    pub moment_level: Option<u32>,
    pub n_levels: Option<usize>,
    pub refinements: Option<u32>,
    pub scenario_id: Option<String>,
    #[serde(default)]
    pub report_wall_time: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: Mode,
    pub generators: Vec<GeneratorKind>,
    pub integrands: Vec<IntegrandSpec>,
    pub q_prime: Vec<f64>,
    pub p: Vec<f64>,
    pub n_paths: usize,
    pub t_eval: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn mark_space(&self) -> crate::Result<MarkSpace> {
        match &self.marks.names {
            Some(n) => MarkSpace::with_names(n.clone(), self.marks.weights.clone()),
            None => MarkSpace::new(self.marks.weights.clone()),
        }
    }

    fn require<'a, T>(v: &'a Option<T>, key: &str) -> CliResult<&'a T> {
        v.as_ref().ok_or_else(|| CliError::Config(format!("missing section or key `{key}`")))
    }

    fn grid_spec(&self) -> GridSpec {
        let g = self.grid.clone().unwrap_or_default();
        match (g.times, g.count) {
            (Some(t), _) => GridSpec::Times(t),
            (None, Some(n)) => GridSpec::Count(n),
            (None, None) => GridSpec::Count(crate::quad::DEFAULT_PANELS),
        }
    }

    fn quad(&self) -> QuadConfig {
        match self.grid.as_ref().and_then(|g| g.quad_h) {
            Some(h) => QuadConfig::new(h),
            None => QuadConfig::for_horizon(self.marks.horizon),
        }
    }

    fn space_with_p(&self, p: Option<f64>) -> CliResult<SmoothSpace> {
        let s = Self::require(&self.space, "space")?;
        Ok(SmoothSpace::new(s.d, s.r, s.q, p.unwrap_or(s.p))?)
    }

    /// Scenario from `[space]`, `[generator]`, `[integrand]` and `[grid]`.
    pub fn scenario(&self) -> CliResult<ConvolutionScenario> {
        let gen = Self::require(&self.generator, "generator")?.clone();
        let xi = Self::require(&self.integrand, "integrand")?;
        self.scenario_for(&gen, xi, None)
    }

    fn scenario_for(&self, gen: &GeneratorKind, xi: &IntegrandSpec, p: Option<f64>) -> CliResult<ConvolutionScenario> {
        let sp = self.space_with_p(p)?;
        let gen = Generator::new(sp.d, gen.clone())?;
        Ok(ConvolutionScenario::new(
            self.mark_space()?,
            sp,
            gen,
            xi.build()?,
            self.marks.horizon,
            self.grid_spec(),
            self.quad(),
        )?)
    }
}

fn resolve_seed(manifest: &RunManifest, cfg: &Config) -> u64 {
    manifest.seed.or(cfg.seed).unwrap_or(0)
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn cmd_sample(manifest: &RunManifest) -> CliResult<()> {
    let cfg = Config::load(&manifest.config)?;
    let ms = cfg.mark_space()?;
    let horizon = cfg.marks.horizon;
    let sample = Config::require(&cfg.sample, "sample")?;
    if sample.n_paths == 0 {
        return Err(CliError::Config("sample.n_paths must be positive".into()));
    }
    let seed = resolve_seed(manifest, &cfg);
    let scenario = match sample.output {
        SampleOutput::Events => None,
        _ => Some(cfg.scenario()?),
    };
    create_dir(&manifest.out)?;
    with_pool(manifest.jobs, || -> CliResult<()> {
        for i in 0..sample.n_paths {
            let path = prm::sample_path(&ms, horizon, &mut rng::substream(seed, i as u64))?;
            let mut buf = Vec::new();
            let name = match (sample.output, &scenario) {
                (SampleOutput::Events, _) | (_, None) => {
                    path.write_csv(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
                    format!("path_{i:05}.csv")
                }
                (SampleOutput::Integral, Some(scn)) => {
                    let xi = scn.integrand().realize(&path, ms.len())?;
                    let ip = sint::integral_path(&ms, &path, &xi, scn.grid(), scn.quad())?;
                    ip.write_csv(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
                    format!("integral_{i:05}.csv")
                }
                (SampleOutput::Convolution, Some(scn)) => {
                    let u = scn.convolution_path(&path)?;
                    u.write_csv(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
                    format!("convolution_{i:05}.csv")
                }
            };
            write_atomic(&manifest.out.join(name), &buf)?;
        }
        Ok(())
    })?
}

fn reports_csv(rows: &[InequalityReport]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(InequalityReport::COLUMNS).map_err(|e| CliError::Internal(e.to_string()))?;
    for r in rows {
        w.write_record(r.csv_record()).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn check_rows(rows: &[InequalityReport]) -> CliResult<()> {
    match rows.iter().find(|r| !r.is_finite()) {
        Some(r) => Err(CliError::Numeric(format!("{} ({}, q' = {})", r.scenario_id, r.mode, r.q_prime))),
        None => Ok(()),
    }
}

/// Runs the `[verify]` experiment; returns report rows and mode-specific
/// diagnostics.
pub fn run_verify(cfg: &Config, seed: u64) -> CliResult<(Vec<InequalityReport>, serde_json::Value)> {
    let v = Config::require(&cfg.verify, "verify")?;
    let scn = Arc::new(cfg.scenario()?);
    let t_eval = v.t_eval.unwrap_or(cfg.marks.horizon);
    let id = v.scenario_id.clone().unwrap_or_else(|| "scenario".into());
    let q_primes = v.q_prime.values();
    if q_primes.is_empty() {
        return Err(CliError::Config("verify.q_prime must not be empty".into()));
    }
    let mut base = ExperimentConfig::new(scn, id, q_primes[0], v.n_paths, seed, t_eval)?;
    base.lambda_threshold = v.lambda_threshold;
    base.moment_level = v.moment_level;
    base.report_wall_time = v.report_wall_time;
    base.validate()?;
    let mut rows = Vec::new();
    let mut diag = Vec::new();
    if let Some(mode) = v.mode.inequality() {
        for qp in &q_primes {
            mode.check(base.scenario.space().p, base.scenario.space().q, *qp)?;
        }
        let started = std::time::Instant::now();
        let stats = verify::collect_path_stats(&ExperimentConfig { lambda_threshold: None, ..base.clone() })?;
        for qp in &q_primes {
            let mut r = verify::report_from_stats(&base.with_q_prime(*qp)?, mode, &stats)?;
            if v.report_wall_time {
                r.wall_ms = started.elapsed().as_millis() as u64;
            }
            diag.push(serde_json::json!({ "q_prime": qp, "median_of_means_ratio": r.median_of_means_ratio }));
            rows.push(r);
        }
        return Ok((rows, serde_json::Value::Array(diag)));
    }
    for qp in &q_primes {
        let cfg_q = base.with_q_prime(*qp)?;
        match v.mode {
            VerifyMode::Stopped => {
                let s = verify::stopped_report(&cfg_q)?;
                diag.push(serde_json::json!({
                    "q_prime": qp,
                    "n_stopped": s.n_stopped,
                    "pre_tau_ok": s.pre_tau_ok,
                    "overshoot_ok": s.overshoot_ok,
                    "monotone_ok": s.monotone_ok,
                    "left_limit_gap": s.left_limit_gap,
                }));
                rows.push(s.report);
            }
            VerifyMode::HigherMoment => {
                let h = verify::higher_moment_report(&cfg_q)?;
                diag.push(serde_json::json!({
                    "level": h.level,
                    "exponent": h.exponent,
                    "terminal_mean": h.terminal.0,
                    "terminal_stderr": h.terminal.1,
                    "scalar_terminal_mean": h.scalar_terminal.0,
                    "scalar_terminal_stderr": h.scalar_terminal.1,
                }));
                rows.push(h.report);
                rows.push(h.scalar);
            }
            VerifyMode::Isometry => {
                let r = verify::ito_isometry_report(&cfg_q)?;
                diag.push(serde_json::json!({ "hilbert_equal": r.hilbert_equal }));
                rows.push(r.report);
            }
            VerifyMode::LayerCake => {
                let n_levels = v.n_levels.unwrap_or(1000);
                let l = verify::layer_cake_check(&cfg_q, n_levels)?;
                diag.push(serde_json::json!({
                    "q_prime": qp,
                    "n_levels": l.n_levels,
                    "quad_bound": l.quad_bound,
                    "agree": l.agree,
                }));
                rows.push(InequalityReport {
                    scenario_id: cfg_q.scenario_id.clone(),
                    mode: "layer_cake".into(),
                    p: cfg_q.scenario.space().p,
                    q: cfg_q.scenario.space().q,
                    q_prime: *qp,
                    n_paths: cfg_q.n_paths,
                    lhs_mean: l.direct_mean,
                    lhs_stderr: l.direct_stderr,
                    rhs_mean: l.tail_mean,
                    rhs_stderr: l.tail_stderr,
                    ratio_hat: if l.tail_mean > 0.0 { l.direct_mean / l.tail_mean } else { 0.0 },
                    ratio_ci_lo: if l.tail_mean > 0.0 { (l.direct_mean - l.quad_bound) / l.tail_mean } else { 0.0 },
                    ratio_ci_hi: if l.tail_mean > 0.0 { (l.direct_mean + l.quad_bound) / l.tail_mean } else { 0.0 },
                    wall_ms: 0,
                    median_of_means_ratio: None,
                });
            }
            VerifyMode::StepApprox => {
                let s = verify::step_approx_convergence(&cfg_q, v.refinements.unwrap_or(6))?;
                for l in &s.levels {
                    rows.push(InequalityReport {
                        scenario_id: format!("{}/level{}", cfg_q.scenario_id, l.level),
                        mode: "step_approx".into(),
                        p: cfg_q.scenario.space().p,
                        q: cfg_q.scenario.space().q,
                        q_prime: cfg_q.scenario.space().p,
                        n_paths: cfg_q.n_paths,
                        lhs_mean: l.integral_distance,
                        lhs_stderr: l.integral_stderr,
                        rhs_mean: l.mp_distance,
                        rhs_stderr: 0.0,
                        ratio_hat: l.ratio,
                        ratio_ci_lo: l.ratio - crate::stats::Z99 * l.integral_stderr / l.mp_distance.max(f64::MIN_POSITIVE),
                        ratio_ci_hi: l.ratio + crate::stats::Z99 * l.integral_stderr / l.mp_distance.max(f64::MIN_POSITIVE),
                        wall_ms: 0,
                        median_of_means_ratio: None,
                    });
                }
                diag.push(serde_json::json!({ "max_ratio": s.max_ratio }));
            }
            _ => unreachable!("inequality modes handled above"),
        }
    }
    Ok((rows, serde_json::Value::Array(diag)))
}

pub fn cmd_verify(manifest: &RunManifest) -> CliResult<()> {
    let cfg = Config::load(&manifest.config)?;
    let seed = resolve_seed(manifest, &cfg);
    let (rows, diag) = with_pool(manifest.jobs, || run_verify(&cfg, seed))??;
    check_rows(&rows)?;
    create_dir(&manifest.out)?;
    let json = serde_json::to_vec_pretty(&rows).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&manifest.out.join("report.json"), &json)?;
    write_atomic(&manifest.out.join("report.csv"), &reports_csv(&rows)?)?;
    let diag = serde_json::to_vec_pretty(&diag).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&manifest.out.join("diagnostics.json"), &diag)?;
    Ok(())
}

/// Key identifying a sweep row.
fn row_key(id: &str, mode: &str, q_prime: f64) -> String {
    format!("{id}|{mode}|{q_prime:?}")
}

fn sweep_id(g: usize, x: usize, p: f64) -> String {
    format!("g{g}-x{x}-p{p:?}")
}

/// Rows already present in a (possibly truncated) sweep CSV.
fn read_partial(path: &Path) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    for rec in rdr.records() {
        let Ok(rec) = rec else { continue };
        if rec.len() != InequalityReport::COLUMNS.len() {
            continue;
        }
        let row: Vec<String> = rec.iter().map(str::to_string).collect();
        let Ok(qp) = row[4].parse::<f64>() else { continue };
        if row[6..13].iter().any(|v| v.parse::<f64>().is_err()) {
            continue;
        }
        done.insert(row_key(&row[0], &row[1], qp), row);
    }
    Ok(done)
}

pub fn cmd_sweep(manifest: &RunManifest) -> CliResult<()> {
    let cfg = Config::load(&manifest.config)?;
    let sweep = Config::require(&cfg.sweep, "sweep")?.clone();
    if sweep.generators.is_empty() || sweep.integrands.is_empty() || sweep.q_prime.is_empty() || sweep.p.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let seed = resolve_seed(manifest, &cfg);
    let t_eval = sweep.t_eval.unwrap_or(cfg.marks.horizon);
    let space = Config::require(&cfg.space, "space")?;
    for p in &sweep.p {
        for qp in &sweep.q_prime {
            sweep.mode.check(*p, space.q, *qp)?;
        }
    }
    create_dir(&manifest.out)?;
    let csv_path = manifest.out.join("sweep.csv");
    let done = read_partial(&csv_path)?;
    // keep completed rows, drop any torn tail, then append as rows finish
    let mut rebuilt = csv::Writer::from_writer(Vec::new());
    rebuilt.write_record(InequalityReport::COLUMNS).map_err(|e| CliError::Internal(e.to_string()))?;
    for row in done.values() {
        rebuilt.write_record(row).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    write_atomic(&csv_path, &rebuilt.into_inner().map_err(|e| CliError::Internal(e.to_string()))?)?;
    let mut appender = fs::OpenOptions::new().append(true).open(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut rows: BTreeMap<(usize, usize, usize, usize), Vec<String>> = BTreeMap::new();
    let mode_name = sweep.mode.name();
    with_pool(manifest.jobs, || -> CliResult<()> {
        for (gi, gen) in sweep.generators.iter().enumerate() {
            for (xi_i, xi) in sweep.integrands.iter().enumerate() {
                for (pi, p) in sweep.p.iter().enumerate() {
                    let id = sweep_id(gi, xi_i, *p);
                    let pending: Vec<usize> = (0..sweep.q_prime.len())
                        .filter(|&k| !done.contains_key(&row_key(&id, mode_name, sweep.q_prime[k])))
                        .collect();
                    for k in 0..sweep.q_prime.len() {
                        if let Some(row) = done.get(&row_key(&id, mode_name, sweep.q_prime[k])) {
                            rows.insert((gi, xi_i, pi, k), row.clone());
                        }
                    }
                    if pending.is_empty() {
                        continue;
                    }
                    let scn = Arc::new(cfg.scenario_for(gen, xi, Some(*p))?);
                    let base = ExperimentConfig::new(scn, id.clone(), sweep.q_prime[0], sweep.n_paths, seed, t_eval)?;
                    let stats = verify::collect_path_stats(&base)?;
                    for k in pending {
                        let r = verify::report_from_stats(&base.with_q_prime(sweep.q_prime[k])?, sweep.mode, &stats)?;
                        check_rows(std::slice::from_ref(&r))?;
                        let rec = r.csv_record();
                        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                        w.write_record(&rec).map_err(|e| CliError::Internal(e.to_string()))?;
                        let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
                        appender.write_all(&bytes).map_err(|e| io_err(&csv_path, e))?;
                        appender.flush().map_err(|e| io_err(&csv_path, e))?;
                        rows.insert((gi, xi_i, pi, k), rec);
                    }
                }
            }
        }
        Ok(())
    })??;
    // canonical order, independent of how many runs it took
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(InequalityReport::COLUMNS).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut seen = HashSet::new();
    for row in rows.values() {
        if seen.insert(row.clone()) {
            w.write_record(row).map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    write_atomic(&csv_path, &w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?)
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Sample(m) => cmd_sample(m),
        Command::Verify(m) => cmd_verify(m),
        Command::Sweep(m) => cmd_sweep(m),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("jumpconv: {e}");
            e.exit_code()
        }
    }
}
