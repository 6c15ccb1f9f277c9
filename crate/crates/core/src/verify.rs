//! Monte Carlo estimates of both sides of the moment and maximal
//! inequalities for stochastic convolutions.
//!
//! Every report pairs its two sides on the same seeded paths. Per-path work
//! runs in parallel; reductions run sequentially in path-index order, so a
//! report is a pure function of its config.

use crate::error::{domain, Error, Result};
use crate::prm::{self, PoissonPath};
use crate::rng;
use crate::sconv::{ConvolutionScenario, ScenarioIntegrand};
use crate::sint::{self, FieldIntegrand, ScalarRule};
use crate::space::Point;
use crate::stats::{self, Z99};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

/// Minimum number of Monte Carlo paths per experiment.
pub const MIN_PATHS: usize = 1000;

/// Largest supported moment level.
pub const MAX_MOMENT_LEVEL: u32 = 4;

/// Which maximal inequality an experiment estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `E sup‖u‖^{q'} <= C E(∫∫‖ξ‖^p dN)^{q'/p}` for `q' >= q`.
    UpperRange,
    /// Same inequality for every `q' > 0`.
    FullRange,
    /// `E sup‖u‖^{q'} <= C (∫∫‖ξ‖^p dν ds)^{q'/p}` for `q' <= p`.
    CompensatorForm,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::UpperRange => "upper_range",
            Mode::FullRange => "full_range",
            Mode::CompensatorForm => "compensator_form",
        }
    }

    /// Rejects exponents outside the range covered by the inequality.
    pub fn check(&self, p: f64, q: f64, q_prime: f64) -> Result<()> {
        match self {
            Mode::UpperRange if q_prime < q => Err(Error::Hypothesis(format!(
                "q' >= q is required (q' = {q_prime}, q = {q})"
            ))),
            Mode::CompensatorForm if q_prime > p => Err(Error::Hypothesis(format!(
                "q' <= p is required (q' = {q_prime}, p = {p})"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One Monte Carlo experiment on a scenario.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Arc<ConvolutionScenario>,
    pub scenario_id: String,
    pub q_prime: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub t_eval: f64,
    pub lambda_threshold: Option<f64>,
    pub moment_level: Option<u32>,
    /// Record elapsed time in reports; off by default so reports are
    /// reproducible byte for byte.
    pub report_wall_time: bool,
}

impl ExperimentConfig {
    pub fn new(
        scenario: Arc<ConvolutionScenario>,
        scenario_id: impl Into<String>,
        q_prime: f64,
        n_paths: usize,
        base_seed: u64,
        t_eval: f64,
    ) -> Result<Self> {
        let cfg = Self {
            scenario,
            scenario_id: scenario_id.into(),
            q_prime,
            n_paths,
            base_seed,
            t_eval,
            lambda_threshold: None,
            moment_level: None,
            report_wall_time: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(mut self, lambda: f64) -> Result<Self> {
        self.lambda_threshold = Some(lambda);
        self.validate()?;
        Ok(self)
    }

    pub fn with_moment_level(mut self, n: u32) -> Result<Self> {
        self.moment_level = Some(n);
        self.validate()?;
        Ok(self)
    }

    pub fn with_q_prime(&self, q_prime: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.q_prime = q_prime;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scenario(&self, scenario: Arc<ConvolutionScenario>) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.scenario = scenario;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_prime > 0.0 && self.q_prime.is_finite()) {
            return domain(format!("q' must be positive and finite, got {}", self.q_prime));
        }
        if self.n_paths < MIN_PATHS {
            return domain(format!("at least {MIN_PATHS} paths are required, got {}", self.n_paths));
        }
        let horizon = self.scenario.horizon();
        if !(self.t_eval > 0.0 && self.t_eval <= horizon) {
            return domain(format!("evaluation time {} outside (0, {horizon}]", self.t_eval));
        }
        if let Some(l) = self.lambda_threshold {
            if !(l > 0.0) {
                return domain(format!("stopping threshold must be positive, got {l}"));
            }
        }
        if let Some(n) = self.moment_level {
            if n == 0 || n > MAX_MOMENT_LEVEL {
                return domain(format!("moment level must be in 1..={MAX_MOMENT_LEVEL}, got {n}"));
            }
        }
        Ok(())
    }

    fn p(&self) -> f64 {
        self.scenario.space().p
    }

    fn q(&self) -> f64 {
        self.scenario.space().q
    }

    /// Path `i`, drawn from its own substream.
    pub fn path(&self, i: usize) -> Result<PoissonPath> {
        let mut r = rng::substream(self.base_seed, i as u64);
        prm::sample_path(self.scenario.mark_space(), self.scenario.horizon(), &mut r)
    }

    fn integrand(&self, path: &PoissonPath) -> Result<Cow<'_, FieldIntegrand>> {
        self.scenario.integrand().realize(path, self.scenario.mark_space().len())
    }

    fn deterministic_field(&self) -> Result<FieldIntegrand> {
        match self.scenario.integrand() {
            ScenarioIntegrand::Field(f) => Ok(f.clone()),
            ScenarioIntegrand::Step(s) => s.to_field(self.scenario.mark_space().len()),
        }
    }
}

/// Monte Carlo summary of one inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub scenario_id: String,
    pub mode: String,
    pub p: f64,
    pub q: f64,
    pub q_prime: f64,
    pub n_paths: usize,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs_mean: f64,
    pub rhs_stderr: f64,
    pub ratio_hat: f64,
    pub ratio_ci_lo: f64,
    pub ratio_ci_hi: f64,
    pub wall_ms: u64,
    #[serde(skip)]
    pub median_of_means_ratio: Option<f64>,
}

impl InequalityReport {
    pub const COLUMNS: [&'static str; 14] = [
        "scenario_id",
        "mode",
        "p",
        "q",
        "q_prime",
        "n_paths",
        "lhs_mean",
        "lhs_stderr",
        "rhs_mean",
        "rhs_stderr",
        "ratio_hat",
        "ratio_ci_lo",
        "ratio_ci_hi",
        "wall_ms",
    ];

    /// Row in [`Self::COLUMNS`] order, floats in shortest round-trip form.
    pub fn csv_record(&self) -> Vec<String> {
        let f = |v: f64| format!("{v:?}");
        vec![
            self.scenario_id.clone(),
            self.mode.clone(),
            f(self.p),
            f(self.q),
            f(self.q_prime),
            self.n_paths.to_string(),
            f(self.lhs_mean),
            f(self.lhs_stderr),
            f(self.rhs_mean),
            f(self.rhs_stderr),
            f(self.ratio_hat),
            f(self.ratio_ci_lo),
            f(self.ratio_ci_hi),
            self.wall_ms.to_string(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [
            self.lhs_mean,
            self.lhs_stderr,
            self.rhs_mean,
            self.rhs_stderr,
            self.ratio_hat,
            self.ratio_ci_lo,
            self.ratio_ci_hi,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Per-path quantities shared by all maximal-inequality reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    /// `sup_{s <= t∧τ} ‖u(s)‖`.
    pub sup: f64,
    /// `∫_0^{t∧τ} ∫ ‖ξ‖^p dN`.
    pub inner: f64,
    /// `∫_0^t ∫ ‖ξ‖^p dN`.
    pub total_mass: f64,
    /// Largest single `‖ξ(t_i, z_i)‖^p` up to `t`.
    pub max_jump: f64,
    /// Controlling process just before `τ`; equals `inner` when `τ = ∞`.
    pub pre_tau_mass: f64,
    pub tau: Option<f64>,
    /// `‖ξ‖^p` of the event at `τ`, zero when `τ = ∞`.
    pub tau_jump: f64,
}

/// Index of the first event at which the running sum of `masses` exceeds
/// `level`, with the running sums just before and at that event (or the
/// total when there is none).
pub fn first_crossing(masses: &[f64], level: f64) -> (Option<usize>, f64, f64) {
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        let before = acc;
        acc += m;
        if acc > level {
            return (Some(i), before, acc);
        }
    }
    (None, acc, acc)
}

/// `‖ξ(t_i, z_i)‖^p` for each event up to `t`.
fn jump_masses(cfg: &ExperimentConfig, path: &PoissonPath, xi: &FieldIntegrand, t: f64) -> Vec<f64> {
    let sp = cfg.scenario.space();
    let mut buf = Point::zeros(sp.d);
    path.up_to(t)
        .iter()
        .map(|e| {
            xi.eval_into(e.time, e.mark, buf.as_mut_slice());
            sp.norm_of(buf.as_slice()).powf(sp.p)
        })
        .collect()
}

fn path_stats(cfg: &ExperimentConfig, i: usize, threshold: Option<f64>) -> Result<PathStats> {
    let path = cfg.path(i)?;
    let xi = cfg.integrand(&path)?;
    let masses = jump_masses(cfg, &path, &xi, cfg.t_eval);
    let level = threshold.map_or(f64::INFINITY, |l| l.powf(cfg.p()));
    let (hit, pre, inner) = first_crossing(&masses, level);
    let tau = hit.map(|k| path.up_to(cfg.t_eval)[k].time);
    let stop = tau.unwrap_or(cfg.t_eval);
    let sup = cfg.scenario.sup_norm_until(&path, stop)?;
    let total_mass = masses.iter().sum();
    let max_jump = masses.iter().copied().fold(0.0, f64::max);
    if !(sup.is_finite() && inner.is_finite()) {
        return Err(Error::Numeric(format!("path {i}: non-finite path statistics")));
    }
    let tau_jump = hit.map_or(0.0, |k| masses[k]);
    Ok(PathStats { sup, inner, total_mass, max_jump, pre_tau_mass: pre, tau, tau_jump })
}

/// Per-path statistics for paths `0..n_paths`, in index order.
pub fn collect_path_stats(cfg: &ExperimentConfig) -> Result<Vec<PathStats>> {
    collect_stats_with(cfg, cfg.lambda_threshold)
}

fn collect_stats_with(cfg: &ExperimentConfig, threshold: Option<f64>) -> Result<Vec<PathStats>> {
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| path_stats(cfg, i, threshold))
        .collect()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what} on path {i} is not finite")));
    }
    Ok(())
}

/// Pairs per-path `lhs` with per-path `rhs` (or a deterministic value).
fn pair_report(
    cfg: &ExperimentConfig,
    mode: &str,
    q_prime: f64,
    lhs: &[f64],
    rhs: Rhs<'_>,
    started: Instant,
) -> Result<InequalityReport> {
    check_finite(lhs, "left-hand side")?;
    let (lhs_mean, lhs_stderr) = stats::mean_stderr(lhs);
    let (rhs_mean, rhs_stderr, ratio_hat, ratio_se, mom) = match rhs {
        Rhs::Paths(r) => {
            check_finite(r, "right-hand side")?;
            let (m, s) = stats::mean_stderr(r);
            let (ratio, se) = stats::ratio_stderr(lhs, r);
            let mom = (q_prime / cfg.p() > 2.0).then(|| {
                let groups = (lhs.len() / 50).clamp(1, 20);
                stats::median_of_means(lhs, groups) / stats::median_of_means(r, groups)
            });
            (m, s, ratio, se, mom)
        }
        Rhs::Exact(v) => {
            if !v.is_finite() {
                return Err(Error::Numeric("right-hand side is not finite".into()));
            }
            let (ratio, se) = if v == 0.0 {
                (if lhs_mean == 0.0 { 0.0 } else { f64::INFINITY }, 0.0)
            } else {
                (lhs_mean / v, lhs_stderr / v)
            };
            let mom = (q_prime / cfg.p() > 2.0).then(|| {
                let groups = (lhs.len() / 50).clamp(1, 20);
                stats::median_of_means(lhs, groups) / v
            });
            (v, 0.0, ratio, se, mom)
        }
    };
    let report = InequalityReport {
        scenario_id: cfg.scenario_id.clone(),
        mode: mode.to_string(),
        p: cfg.p(),
        q: cfg.q(),
        q_prime,
        n_paths: lhs.len(),
        lhs_mean,
        lhs_stderr,
        rhs_mean,
        rhs_stderr,
        ratio_hat,
        ratio_ci_lo: ratio_hat - Z99 * ratio_se,
        ratio_ci_hi: ratio_hat + Z99 * ratio_se,
        wall_ms: if cfg.report_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
        median_of_means_ratio: mom,
    };
    if !report.is_finite() {
        return Err(Error::Numeric(format!(
            "report for {} ({mode}, q' = {q_prime}) has non-finite statistics",
            cfg.scenario_id
        )));
    }
    Ok(report)
}

enum Rhs<'a> {
    Paths(&'a [f64]),
    Exact(f64),
}

/// Mean and standard error of `(sup_{s<=t} ‖u(s)‖)^{q'}`.
pub fn maximal_lhs(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let st = collect_stats_with(cfg, None)?;
    let v: Vec<f64> = st.iter().map(|s| s.sup.powf(cfg.q_prime)).collect();
    Ok(stats::mean_stderr(&v))
}

/// Mean and standard error of `(∫_0^t ∫ ‖ξ‖^p dN)^{q'/p}`.
pub fn maximal_rhs_n(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let p = cfg.p();
    let v: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = cfg.path(i)?;
            let xi = cfg.integrand(&path)?;
            let g = xi.norm_power_rule(cfg.scenario.space(), p);
            Ok(sint::ls_integral_n(&path, &g, cfg.t_eval)?.powf(cfg.q_prime / p))
        })
        .collect::<Result<_>>()?;
    Ok(stats::mean_stderr(&v))
}

/// `(∫_0^t ∫ ‖ξ‖^p dν ds)^{q'/p}` for a deterministic integrand, `q' <= p`.
pub fn maximal_rhs_nu(cfg: &ExperimentConfig) -> Result<f64> {
    if cfg.q_prime > cfg.p() {
        return domain(format!(
            "the compensator form needs q' <= p (q' = {}, p = {})",
            cfg.q_prime,
            cfg.p()
        ));
    }
    nu_mass(cfg, cfg.p()).map(|m| m.powf(cfg.q_prime / cfg.p()))
}

/// `∫_0^t Σ_k ‖ξ(s, z_k)‖^e ν_k ds`.
fn nu_mass(cfg: &ExperimentConfig, e: f64) -> Result<f64> {
    let xi = cfg.deterministic_field()?;
    let g = xi.norm_power_rule(cfg.scenario.space(), e);
    sint::ls_integral_nu(cfg.scenario.mark_space(), &g, cfg.t_eval, cfg.scenario.quad())
}

/// Report for `mode` computed from precomputed per-path statistics.
pub fn report_from_stats(
    cfg: &ExperimentConfig,
    mode: Mode,
    path_stats: &[PathStats],
) -> Result<InequalityReport> {
    let started = Instant::now();
    let (p, q, qp) = (cfg.p(), cfg.q(), cfg.q_prime);
    mode.check(p, q, qp)?;
    let lhs: Vec<f64> = path_stats.iter().map(|s| s.sup.powf(qp)).collect();
    match mode {
        Mode::CompensatorForm => {
            let rhs = maximal_rhs_nu(cfg)?;
            pair_report(cfg, mode.name(), qp, &lhs, Rhs::Exact(rhs), started)
        }
        _ => {
            let rhs: Vec<f64> = path_stats.iter().map(|s| s.inner.powf(qp / p)).collect();
            pair_report(cfg, mode.name(), qp, &lhs, Rhs::Paths(&rhs), started)
        }
    }
}

/// Both sides of the inequality selected by `mode`, on common paths.
pub fn inequality_report(cfg: &ExperimentConfig, mode: Mode) -> Result<InequalityReport> {
    mode.check(cfg.p(), cfg.q(), cfg.q_prime)?;
    if mode == Mode::CompensatorForm {
        cfg.deterministic_field()?;
    }
    let started = Instant::now();
    let st = collect_stats_with(cfg, None)?;
    let mut r = report_from_stats(cfg, mode, &st)?;
    if cfg.report_wall_time {
        r.wall_ms = started.elapsed().as_millis() as u64;
    }
    Ok(r)
}

/// Stopped experiment with pathwise checks of the truncation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedReport {
    pub report: InequalityReport,
    /// Paths with `τ <= t`.
    pub n_stopped: usize,
    /// Controlling process `<= λ^p` strictly before `τ` on every path.
    pub pre_tau_ok: bool,
    /// Stopped mass `<= min(total mass, λ^p + largest jump)` on every path.
    pub overshoot_ok: bool,
    /// Stopped right-hand side `<=` unstopped right-hand side on every path.
    pub monotone_ok: bool,
    /// Largest `|inner - pre-τ mass - jump at τ|`; zero when the left limit at
    /// `τ` is carried exactly.
    pub left_limit_gap: f64,
    pub path_stats: Vec<PathStats>,
}

/// Stopping at `τ = inf{t : (∫∫‖ξ‖^p dN)^{1/p} > λ}`; both sides use the
/// experiment's `q'`.
pub fn stopped_report(cfg: &ExperimentConfig) -> Result<StoppedReport> {
    let Some(lambda) = cfg.lambda_threshold else {
        return domain("stopped experiments need a positive threshold");
    };
    let started = Instant::now();
    let st = collect_stats_with(cfg, Some(lambda))?;
    let level = lambda.powf(cfg.p());
    let (p, qp) = (cfg.p(), cfg.q_prime);
    let mut pre_tau_ok = true;
    let mut overshoot_ok = true;
    let mut monotone_ok = true;
    let mut gap = 0.0f64;
    for s in &st {
        pre_tau_ok &= s.pre_tau_mass <= level;
        overshoot_ok &= s.inner <= s.total_mass && (s.tau.is_none() || s.inner <= level + s.max_jump);
        monotone_ok &= s.inner.powf(qp / p) <= s.total_mass.powf(qp / p);
        if s.tau.is_some() {
            gap = gap.max((s.inner - s.pre_tau_mass - s.tau_jump).abs());
        }
    }
    let lhs: Vec<f64> = st.iter().map(|s| s.sup.powf(qp)).collect();
    let rhs: Vec<f64> = st.iter().map(|s| s.inner.powf(qp / p)).collect();
    let report = pair_report(cfg, "stopped", qp, &lhs, Rhs::Paths(&rhs), started)?;
    Ok(StoppedReport {
        report,
        n_stopped: st.iter().filter(|s| s.tau.is_some()).count(),
        pre_tau_ok,
        overshoot_ok,
        monotone_ok,
        left_limit_gap: gap,
        path_stats: st,
    })
}

/// Direct moment versus layer-cake tail integral.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCakeReport {
    pub q_prime: f64,
    pub n_levels: usize,
    pub direct_mean: f64,
    pub direct_stderr: f64,
    pub tail_mean: f64,
    pub tail_stderr: f64,
    /// Mean over samples of the weight of the level containing the sample,
    /// a bound on the discretization error of the tail integral.
    pub quad_bound: f64,
    pub agree: bool,
}

/// `E X^{q'}` directly and as `∫_0^∞ q'λ^{q'-1} P(X > λ) dλ` over
/// `n_levels` equal levels up to the sample maximum.
pub fn layer_cake_from_samples(xs: &[f64], q_prime: f64, n_levels: usize) -> Result<LayerCakeReport> {
    if n_levels < 100 {
        return domain(format!("need at least 100 levels, got {n_levels}"));
    }
    if xs.is_empty() || xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return domain("layer-cake samples must be finite and nonnegative");
    }
    if !(q_prime > 0.0) {
        return domain("layer-cake exponent must be positive");
    }
    let top = xs.iter().copied().fold(0.0, f64::max);
    let direct: Vec<f64> = xs.iter().map(|x| x.powf(q_prime)).collect();
    let (direct_mean, direct_stderr) = stats::mean_stderr(&direct);
    if top == 0.0 {
        return Ok(LayerCakeReport {
            q_prime,
            n_levels,
            direct_mean,
            direct_stderr,
            tail_mean: 0.0,
            tail_stderr: 0.0,
            quad_bound: 0.0,
            agree: direct_mean == 0.0,
        });
    }
    let edges: Vec<f64> = (0..=n_levels).map(|l| top * l as f64 / n_levels as f64).collect();
    let weights: Vec<f64> = edges.windows(2).map(|w| w[1].powf(q_prime) - w[0].powf(q_prime)).collect();
    let mids: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut cumulative = vec![0.0; n_levels + 1];
    for l in 0..n_levels {
        cumulative[l + 1] = cumulative[l] + weights[l];
    }
    let mut tail = Vec::with_capacity(xs.len());
    let mut bound = 0.0;
    for x in xs {
        // levels whose midpoint lies below x contribute their full weight
        tail.push(cumulative[mids.partition_point(|m| m < x)]);
        let level = (edges[1..].partition_point(|e| e < x)).min(n_levels - 1);
        bound += weights[level];
    }
    let (tail_mean, tail_stderr) = stats::mean_stderr(&tail);
    let quad_bound = bound / xs.len() as f64;
    let combined = (direct_stderr.powi(2) + tail_stderr.powi(2)).sqrt();
    let agree = (direct_mean - tail_mean).abs() <= 4.0 * combined + quad_bound + 1e-12 * direct_mean;
    Ok(LayerCakeReport {
        q_prime,
        n_levels,
        direct_mean,
        direct_stderr,
        tail_mean,
        tail_stderr,
        quad_bound,
        agree,
    })
}

/// Layer-cake check on `sup_{s<=t} ‖u(s)‖`.
pub fn layer_cake_check(cfg: &ExperimentConfig, n_levels: usize) -> Result<LayerCakeReport> {
    let st = collect_stats_with(cfg, None)?;
    let xs: Vec<f64> = st.iter().map(|s| s.sup).collect();
    layer_cake_from_samples(&xs, cfg.q_prime, n_levels)
}

/// Moment of order `p^n` against the iterated compensator bound.
#[derive(Debug, Clone, PartialEq)]
pub struct HigherMomentReport {
    pub level: u32,
    pub exponent: f64,
    /// `E sup‖u‖^{p^n}` against `Σ_k (∫∫‖ξ‖^{p^k} dν ds)^{p^{n-k}}`.
    pub report: InequalityReport,
    /// Mean and standard error of `‖u(t)‖^{p^n}`.
    pub terminal: (f64, f64),
    /// Same bound for the real integral `∫∫ ‖ξ‖ dÑ` (identity semigroup).
    pub scalar: InequalityReport,
    pub scalar_terminal: (f64, f64),
}

fn iterated_rhs(cfg: &ExperimentConfig, n: u32) -> Result<f64> {
    let p = cfg.p();
    let mut total = 0.0;
    for k in 1..=n {
        let inner = nu_mass(cfg, p.powi(k as i32))?;
        total += inner.powf(p.powi((n - k) as i32));
    }
    if !total.is_finite() {
        return domain(format!("moment level {n} overflows the floating-point range"));
    }
    Ok(total)
}

pub fn higher_moment_report(cfg: &ExperimentConfig) -> Result<HigherMomentReport> {
    let Some(n) = cfg.moment_level else {
        return domain("higher-moment experiments need a moment level");
    };
    let started = Instant::now();
    let e = cfg.p().powi(n as i32);
    let rhs = iterated_rhs(cfg, n)?;
    let scn = &cfg.scenario;
    let sp = scn.space();
    let ms = scn.mark_space();
    let t = cfg.t_eval;
    let per_path: Vec<[f64; 4]> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = cfg.path(i)?;
            let xi = cfg.integrand(&path)?;
            let (sup, value) = scn.sup_and_value(&path, t)?;
            let f = FieldIntegrand::from_scalar(&xi.norm_power_rule(sp, 1.0), ms.len());
            let ip = sint::integral_path(ms, &path, &f, scn.grid(), scn.quad())?;
            let scalar_sup = ip.sup_norm_until(&crate::space::SmoothSpace::hilbert(1), t);
            let scalar_t = sint::integrate_field(ms, &path, &f, t, scn.quad())?[0].abs();
            Ok([
                sup.powf(e),
                sp.norm_of(value.as_slice()).powf(e),
                scalar_sup.powf(e),
                scalar_t.powf(e),
            ])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| per_path.iter().map(|v| v[j]).collect::<Vec<f64>>();
    let report = pair_report(cfg, "higher_moment", e, &col(0), Rhs::Exact(rhs), started)?;
    let scalar = pair_report(cfg, "higher_moment_scalar", e, &col(2), Rhs::Exact(rhs), started)?;
    Ok(HigherMomentReport {
        level: n,
        exponent: e,
        report,
        terminal: stats::mean_stderr(&col(1)),
        scalar,
        scalar_terminal: stats::mean_stderr(&col(3)),
    })
}

/// `E‖I_t(ξ)‖^p` against `∫_0^t ∫ ‖ξ‖^p dν ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    pub report: InequalityReport,
    /// In a Hilbert space with `p = 2`, whether the two sides agree within
    /// four standard errors.
    pub hilbert_equal: Option<bool>,
}

pub fn ito_isometry_report(cfg: &ExperimentConfig) -> Result<IsometryReport> {
    let started = Instant::now();
    let scn = &cfg.scenario;
    let sp = scn.space();
    let p = sp.p;
    let rhs = nu_mass(cfg, p)?;
    let lhs: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = cfg.path(i)?;
            let xi = cfg.integrand(&path)?;
            let v = sint::integrate_field(scn.mark_space(), &path, &xi, cfg.t_eval, scn.quad())?;
            Ok(sp.norm_of(v.as_slice()).powf(p))
        })
        .collect::<Result<_>>()?;
    let report = pair_report(cfg, "isometry", p, &lhs, Rhs::Exact(rhs), started)?;
    let hilbert_equal = (sp.is_hilbert() && p == 2.0)
        .then(|| (report.lhs_mean - rhs).abs() <= 4.0 * report.lhs_stderr + 1e-12 * rhs);
    Ok(IsometryReport { report, hilbert_equal })
}

/// One dyadic level of the step-approximation experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepApproxLevel {
    pub level: u32,
    pub intervals: usize,
    /// `∫_0^T ∫ ‖f - f_n‖^p dν dt`.
    pub mp_distance: f64,
    /// Mean and standard error of `‖I_T(f_n) - I_T(f)‖^p`.
    pub integral_distance: f64,
    pub integral_stderr: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepApproxReport {
    pub levels: Vec<StepApproxLevel>,
    /// Largest `integral_distance / mp_distance` over the levels.
    pub max_ratio: f64,
}

/// Left-point step approximant of `f` on `n` equal intervals of `[0, T]`.
pub fn left_point_approximant(f: &FieldIntegrand, horizon: f64, n: usize) -> Result<FieldIntegrand> {
    let bp: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    let values = bp[..n]
        .iter()
        .map(|t| (0..f.n_marks()).map(|k| f.eval(t.next_up(), k)).collect())
        .collect();
    FieldIntegrand::step(bp, values)
}

pub fn step_approx_convergence(cfg: &ExperimentConfig, refinements: u32) -> Result<StepApproxReport> {
    if refinements == 0 || refinements > 20 {
        return domain(format!("refinements must be in 1..=20, got {refinements}"));
    }
    let f = cfg.deterministic_field()?;
    let scn = &cfg.scenario;
    let (ms, sp, quad) = (scn.mark_space(), scn.space(), scn.quad());
    let horizon = scn.horizon();
    let p = sp.p;
    let mut levels = Vec::new();
    for level in 1..=refinements {
        let n = 1usize << level;
        let fnn = left_point_approximant(&f, horizon, n)?;
        let mut mp = 0.0;
        for (k, w) in ms.weights().iter().enumerate() {
            for i in 0..n {
                let (a, b) = (horizon * i as f64 / n as f64, horizon * (i + 1) as f64 / n as f64);
                let panels = quad.panels(a, b);
                mp += w * crate::quad::simpson(
                    |s| {
                        let s = s.max(a.next_up());
                        sp.norm_of((f.eval(s, k) - fnn.eval(s, k)).as_slice()).powf(p)
                    },
                    a,
                    b,
                    panels,
                );
            }
        }
        let d: Vec<f64> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let path = cfg.path(i)?;
                let a = sint::integrate_field(ms, &path, &fnn, horizon, quad)?;
                let b = sint::integrate_field(ms, &path, &f, horizon, quad)?;
                Ok(sp.norm_of((a - b).as_slice()).powf(p))
            })
            .collect::<Result<_>>()?;
        let (mean, se) = stats::mean_stderr(&d);
        let ratio = if mp > 0.0 { mean / mp } else if mean == 0.0 { 0.0 } else { f64::INFINITY };
        levels.push(StepApproxLevel {
            level,
            intervals: n,
            mp_distance: mp,
            integral_distance: mean,
            integral_stderr: se,
            ratio,
        });
    }
    let max_ratio = levels.iter().map(|l| l.ratio).fold(0.0, f64::max);
    Ok(StepApproxReport { levels, max_ratio })
}

impl FieldIntegrand {
    /// Real-valued integrand `(t, z) ↦ g(t, z)` of dimension one.
    pub fn from_scalar(g: &ScalarRule, n_marks: usize) -> FieldIntegrand {
        let (g1, g2) = (g.clone(), g.clone());
        let anti = g.has_antiderivative().then(|| {
            Arc::new(move |t: f64, k: usize| Point::from_element(1, g2.antiderivative(t, k).unwrap_or(f64::NAN)))
                as Arc<dyn Fn(f64, usize) -> Point + Send + Sync>
        });
        FieldIntegrand::custom(1, n_marks, move |t, k| Point::from_element(1, g1.eval(t, k)), anti)
    }
}
