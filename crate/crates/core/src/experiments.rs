//! Monte Carlo risk estimation, phase sweeps and Hellinger asymptotics.
//!
//! Every replication draws from its own stream, seeded from the master seed
//! and the replication's coordinates. Results therefore do not depend on
//! scheduling, and a sweep run on one worker writes the same bytes as a run
//! on many.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::boundary::solve_beta_star;
use crate::error::{invalid, Error, Result};
use crate::hc::{hc_classical, hc_star, np_oracle_test_log, Decision};
use crate::models::{sample_alternative, sample_null, Model, ModelSpec, SampleBatch};
use crate::numeric::{ls_slope, norm_sf, Integral};
use crate::rate::analytic_rate;
use crate::rng::hash_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    HcStar,
    HcClassical,
    NpOracle,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::HcStar => "hc_star",
            TestKind::HcClassical => "hc_classical",
            TestKind::NpOracle => "np_oracle",
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: ModelSpec,
    pub n_values: Vec<usize>,
    pub beta_grid: Vec<f64>,
    pub test_kind: TestKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// Thread count; `None` uses the global pool. Never changes results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Draw the "alternative" batches from the null as well. A calibration
    /// control: the risk of any test is then 1 in expectation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub null_control: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n_values.is_empty() {
            return Err(invalid("n_values", "must be nonempty"));
        }
        if self.beta_grid.is_empty() {
            return Err(invalid("beta_grid", "must be nonempty"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(invalid("beta_grid", format!("values must lie in (0, 1), got {b}")));
        }
        let min_n = if self.test_kind == TestKind::NpOracle { 1 } else { 16 };
        if let Some(n) = self.n_values.iter().find(|n| **n < min_n) {
            return Err(invalid("n_values", format!("values must be at least {min_n} for {}, got {n}", self.test_kind.name())));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        Ok(())
    }
}

/// Type I and Type II error rates of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub type_i_rate: f64,
    pub type_ii_rate: f64,
    pub risk: f64,
    /// `1.96 sqrt(p (1 - p) / reps)` for each rate, summed.
    pub half_width_95: f64,
    pub replications: usize,
}

impl RiskEstimate {
    fn from_counts(rejected_null: usize, retained_alt: usize, reps: usize) -> Self {
        let r = reps as f64;
        let (a, b) = (rejected_null as f64 / r, retained_alt as f64 / r);
        let hw = |p: f64| 1.96 * (p * (1.0 - p) / r).sqrt();
        RiskEstimate { type_i_rate: a, type_ii_rate: b, risk: a + b, half_width_95: hw(a) + hw(b), replications: reps }
    }
}

const NULL_TAG: u64 = 0;
const ALT_TAG: u64 = 1;

/// Seed shared by every replication of the cell `(n, beta)`.
pub fn cell_seed(master_seed: u64, n: usize, beta: f64) -> u64 {
    hash_words(&[master_seed, n as u64, beta.to_bits()])
}

fn replication_seed(cell: u64, rep: usize, tag: u64) -> u64 {
    hash_words(&[cell, rep as u64, tag])
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Computation(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

fn rejects(config: &ExperimentConfig, model: &Model, batch: &SampleBatch, beta: f64) -> Result<bool> {
    let n = batch.n;
    let decision = match config.test_kind {
        TestKind::NpOracle => {
            let llr: Vec<f64> = batch.rows().map(|r| model.log_lr_unchecked(r)).collect();
            np_oracle_test_log(&llr, beta)?.decision
        }
        TestKind::HcStar => {
            let llr: Vec<f64> = batch.rows().map(|r| model.log_lr_unchecked(r)).collect();
            let tail = |v: f64| model.null_log_tail(v).value;
            hc_star(&llr, tail, None)?.tested(n, config.delta)?.decision.unwrap_or(Decision::Retain)
        }
        TestKind::HcClassical => {
            let p: Vec<f64> = batch
                .rows()
                .map(|r| model.gaussian_score(r).map(norm_sf))
                .collect::<Option<_>>()
                .ok_or_else(|| {
                    Error::Unsupported(format!("hc_classical needs a Gaussian score; {} has none", config.spec.family()))
                })?;
            hc_classical(&p, None)?.tested(n, config.delta)?.decision.unwrap_or(Decision::Retain)
        }
    };
    Ok(decision == Decision::Reject)
}

fn risk_in_current_pool(config: &ExperimentConfig, n: usize, beta: f64) -> Result<RiskEstimate> {
    let model = Model::new(&config.spec, (n as f64).max(3.0))?;
    let cell = cell_seed(config.master_seed, n, beta);
    let outcomes: Vec<Result<(bool, bool)>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let null = sample_null(&config.spec, n, replication_seed(cell, rep, NULL_TAG))?;
            let alt_seed = replication_seed(cell, rep, ALT_TAG);
            let alt = if config.null_control {
                sample_null(&config.spec, n, alt_seed)?
            } else {
                sample_alternative(&config.spec, n, beta, alt_seed)?
            };
            Ok((rejects(config, &model, &null, beta)?, !rejects(config, &model, &alt, beta)?))
        })
        .collect();
    let mut type_i = 0;
    let mut type_ii = 0;
    for o in outcomes {
        let (a, b) = o?;
        type_i += a as usize;
        type_ii += b as usize;
    }
    Ok(RiskEstimate::from_counts(type_i, type_ii, config.replications))
}

/// Risk of `config.test_kind` at one `(n, beta)` cell.
pub fn estimate_risk(config: &ExperimentConfig, n: usize, beta: f64) -> Result<RiskEstimate> {
    let mut single = config.clone();
    single.n_values = vec![n];
    single.beta_grid = vec![beta];
    single.validate()?;
    in_pool(config.workers, || risk_in_current_pool(config, n, beta))?
}

/// One row of a sweep. Failed cells keep their coordinates and the error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    pub estimate: Option<RiskEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub beta_star: Option<f64>,
    pub cells: Vec<CellResult>,
}

pub const CSV_COLUMNS: [&str; 10] = ["n", "beta", "test", "type_i", "type_ii", "risk", "hw95", "seed", "beta_star", "status"];

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Computation(format!("csv: {e}"));
        w.write_record(CSV_COLUMNS).map_err(io)?;
        let star = self.beta_star.map(fmt_float).unwrap_or_default();
        for c in &self.cells {
            let (nums, status) = match (&c.estimate, &c.error) {
                (Some(e), _) => (
                    [e.type_i_rate, e.type_ii_rate, e.risk, e.half_width_95].map(fmt_float),
                    "ok".to_string(),
                ),
                (None, err) => (Default::default(), format!("error: {}", err.as_deref().unwrap_or("unknown"))),
            };
            let mut row = vec![c.n.to_string(), fmt_float(c.beta), self.config.test_kind.name().to_string()];
            row.extend(nums);
            row.extend([c.seed.to_string(), star.clone(), status]);
            w.write_record(&row).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Computation(format!("csv: {e}")))
    }

    /// JSON summary: config echo, cell counts and the content hash of the CSV.
    pub fn summary(&self) -> Result<serde_json::Value> {
        let csv = self.to_csv()?;
        Ok(serde_json::json!({
            "config": self.config,
            "beta_star": self.beta_star,
            "cells": self.cells.len(),
            "failures": self.failures(),
            "csv_bytes": csv.len(),
            "content_hash": content_hash(&csv),
        }))
    }

    /// Writes the CSV to `csv_path` and the summary next to it as `.json`.
    pub fn write(&self, csv_path: &Path) -> Result<PathBuf> {
        let csv = self.to_csv()?;
        std::fs::write(csv_path, &csv)?;
        let json_path = csv_path.with_extension("json");
        let mut f = std::fs::File::create(&json_path)?;
        serde_json::to_writer_pretty(&mut f, &self.summary()?).map_err(|e| Error::Computation(e.to_string()))?;
        writeln!(f)?;
        Ok(json_path)
    }
}

/// Git blob hash (`sha1("blob <len>\0" ++ bytes)`) in hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Risk over every `(n, beta)` pair, with the boundary of the model's rate.
pub fn phase_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let beta_star = analytic_rate(&config.spec).ok().and_then(|rate| solve_beta_star(&rate).beta_star);
    let coords: Vec<(usize, f64)> =
        config.n_values.iter().flat_map(|&n| config.beta_grid.iter().map(move |&b| (n, b))).collect();
    let cells = in_pool(config.workers, || {
        coords
            .par_iter()
            .map(|&(n, beta)| {
                let seed = cell_seed(config.master_seed, n, beta);
                match risk_in_current_pool(config, n, beta) {
                    Ok(e) => CellResult { n, beta, seed, estimate: Some(e), error: None },
                    Err(e) => CellResult { n, beta, seed, estimate: None, error: Some(e.to_string()) },
                }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(SweepResult { config: config.clone(), beta_star, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HellingerMethod {
    Quadrature,
    MonteCarlo,
}

/// Squared Hellinger distance between the null and the `n^-beta` mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerEstimate {
    pub n: f64,
    pub beta: f64,
    pub h2: f64,
    pub n_times_h2: f64,
    pub method: HellingerMethod,
    pub error_bound: f64,
    /// `(sqrt 2 - 1)^2 E[min(|u|, u^2)]` with `u = eps (L - 1)`.
    pub lower_envelope: f64,
    /// `E[min(|u|, u^2)]`.
    pub upper_envelope: f64,
}

/// `(sqrt(1 + u) - 1)^2`, written to avoid cancellation for small `u`.
fn root_gap_sq(u: f64) -> f64 {
    let d = u / ((1.0 + u).sqrt() + 1.0);
    d * d
}

/// `eps (e^ell - 1)`; `None` when it overflows.
fn contamination(ell: f64, eps: f64) -> Option<f64> {
    let u = eps * ell.exp_m1();
    u.is_finite().then_some(u)
}

fn hellinger_integrand(ell: f64, eps: f64) -> f64 {
    match contamination(ell, eps) {
        Some(u) => root_gap_sq(u),
        None => {
            let s = (0.5 * (eps.ln() + ell)).exp();
            (s - 1.0) * (s - 1.0)
        }
    }
}

fn envelope(ell: f64, eps: f64) -> f64 {
    match contamination(ell, eps) {
        Some(u) => u.abs().min(u * u),
        None => f64::INFINITY,
    }
}

const LOWER_ENVELOPE_FACTOR: f64 = (std::f64::consts::SQRT_2 - 1.0) * (std::f64::consts::SQRT_2 - 1.0);

/// `H^2` from any routine computing `E_null[g(log L)]` to a tolerance.
///
/// The first pass runs at absolute tolerance `1e-12`; if that is coarser
/// than `1e-3 h2` the integral is redone at `1e-4 h2`. The envelopes are
/// computed to `1e-3 h2`.
pub fn hellinger_from_expectation(
    n: f64,
    beta: f64,
    expectation: &dyn Fn(&dyn Fn(f64) -> f64, f64) -> Integral,
) -> HellingerEstimate {
    let eps = n.powf(-beta);
    let h = |ell: f64| hellinger_integrand(ell, eps);
    let mut main = expectation(&h, 1e-12);
    if main.value > 0.0 && 1e-3 * main.value < 1e-12 {
        main = expectation(&h, 1e-4 * main.value);
    }
    let env = expectation(&|ell| envelope(ell, eps), (1e-3 * main.value).max(f64::MIN_POSITIVE));
    let h2 = main.value.max(0.0);
    HellingerEstimate {
        n,
        beta,
        h2,
        n_times_h2: n * h2,
        method: HellingerMethod::Quadrature,
        error_bound: main.error,
        lower_envelope: LOWER_ENVELOPE_FACTOR * env.value,
        upper_envelope: env.value,
    }
}

fn check_open_unit(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

/// `H^2(P_n, (1 - eps) P_n + eps Q_n)` with `eps = n^-beta`, by quadrature
/// (or exact sums for discrete nulls) over the null law.
pub fn hellinger_sq(spec: &ModelSpec, beta: f64, n: f64) -> Result<HellingerEstimate> {
    check_open_unit(beta)?;
    let model = Model::new(spec, n)?;
    Ok(hellinger_from_expectation(n, beta, &|g, tol| model.null_expectation(g, tol)))
}

/// Monte Carlo estimate of the same quantity from `draws` null samples.
pub fn hellinger_sq_monte_carlo(spec: &ModelSpec, beta: f64, n: f64, draws: usize, seed: u64) -> Result<HellingerEstimate> {
    check_open_unit(beta)?;
    if draws < 2 {
        return Err(invalid("draws", "must be at least 2"));
    }
    let model = Model::new(spec, n)?;
    let eps = n.powf(-beta);
    let mut rng = crate::rng::stream(seed, crate::rng::Purpose::MonteCarlo, 1);
    let mut row = vec![0.0; model.dim()];
    let (mut sum, mut sum_sq, mut env) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        model.draw(&mut rng, false, &mut row);
        let ell = model.log_lr_unchecked(&row);
        let v = hellinger_integrand(ell, eps);
        sum += v;
        sum_sq += v * v;
        env += envelope(ell, eps);
    }
    let d = draws as f64;
    let mean = sum / d;
    let var = (sum_sq / d - mean * mean).max(0.0) * d / (d - 1.0);
    Ok(HellingerEstimate {
        n,
        beta,
        h2: mean,
        n_times_h2: n * mean,
        method: HellingerMethod::MonteCarlo,
        error_bound: (var / d).sqrt(),
        lower_envelope: LOWER_ENVELOPE_FACTOR * env / d,
        upper_envelope: env / d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    /// `n H^2` grows: `H^2 = omega(1/n)`.
    Supercritical,
    /// `n H^2` decays: `H^2 = o(1/n)`.
    Subcritical,
    Inconclusive,
    /// Every estimate is exactly zero.
    DegenerateZero,
}

/// Slope margin separating a trend from noise.
pub const TREND_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct HellingerTrend {
    pub estimates: Vec<HellingerEstimate>,
    /// Least-squares slope of `log(n h2)` against `log n`.
    #[serde(serialize_with = "crate::extended::serde_ext::serialize")]
    pub slope: f64,
    pub verdict: TrendVerdict,
}

/// Classifies a series of estimates by the slope of `log(n h2)`.
pub fn trend_from_estimates(estimates: Vec<HellingerEstimate>) -> HellingerTrend {
    if estimates.iter().all(|e| e.h2 == 0.0) {
        return HellingerTrend { estimates, slope: 0.0, verdict: TrendVerdict::DegenerateZero };
    }
    let x: Vec<f64> = estimates.iter().map(|e| e.n.ln()).collect();
    let y: Vec<f64> = estimates.iter().map(|e| e.n_times_h2.ln()).collect();
    let slope = if y.iter().any(|v| !v.is_finite()) { f64::NEG_INFINITY } else { ls_slope(&x, &y) };
    let verdict = if slope > TREND_MARGIN {
        TrendVerdict::Supercritical
    } else if slope < -TREND_MARGIN {
        TrendVerdict::Subcritical
    } else {
        TrendVerdict::Inconclusive
    };
    HellingerTrend { estimates, slope, verdict }
}

/// Checks that `n_list` is geometric with at least 4 points.
fn check_geometric(n_list: &[f64]) -> Result<()> {
    if n_list.len() < 4 {
        return Err(invalid("n_list", "needs at least 4 values"));
    }
    if n_list.iter().any(|n| !(n.is_finite() && *n >= 3.0)) {
        return Err(invalid("n_list", "values must be finite and at least 3"));
    }
    let ratio = n_list[1] / n_list[0];
    if !(ratio > 1.0) || n_list.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9) {
        return Err(invalid("n_list", "must be an increasing geometric sequence"));
    }
    Ok(())
}

/// `H^2` along a geometric list of sample sizes and its growth verdict.
pub fn hellinger_trend(spec: &ModelSpec, beta: f64, n_list: &[f64]) -> Result<HellingerTrend> {
    check_geometric(n_list)?;
    let estimates = n_list.iter().map(|&n| hellinger_sq(spec, beta, n)).collect::<Result<Vec<_>>>()?;
    Ok(trend_from_estimates(estimates))
}
