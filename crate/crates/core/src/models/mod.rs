//! Model families: specifications, samplers, exact log-likelihood ratios,
//! null tail probabilities and the tail-condition estimator.
//!
//! Every observation is one row of `dim()` numbers. Scalar families store
//! the raw value; Brownian paths are reduced to `sum f'_k dX_k` and the
//! Curie–Weiss model to its magnetization sum, both sufficient for the
//! likelihood ratio.

pub mod curie_weiss;
mod family;
mod spec;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use family::{Model, TailMethod, TailProbability};
pub use spec::ModelSpec;

use crate::error::{invalid, Result};
use crate::extended::{serde_ext, INF};
use crate::numeric::ls_slope;
use crate::rng::{stream, Purpose};

/// Which hypothesis generated a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "hypothesis", rename_all = "snake_case")]
pub enum Hypothesis {
    Null,
    Alternative { beta: f64 },
}

/// `n` observations with the seed that produced them.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub family: String,
    pub n: usize,
    pub dim: usize,
    pub columns: Vec<String>,
    pub hypothesis: Hypothesis,
    pub seed: u64,
    /// Row-major, `n * dim` values.
    pub values: Vec<f64>,
    /// Which rows came from the signal law. Diagnostics only.
    pub signal: Vec<bool>,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    /// One row per observation: `index`, the family columns, `signal`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,{},signal", self.columns.join(","))?;
        for (i, row) in self.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{i},{},{}", cells.join(","), self.signal[i] as u8)?;
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(())
}

/// The calibration needs `log n > 0`; tiny batches are calibrated at `n = 3`.
fn calibration_n(n: usize) -> f64 {
    (n as f64).max(3.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

fn fill_batch<R: Rng>(model: &Model, n: usize, eps: f64, rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    let dim = model.dim();
    let mut values = vec![0.0; n * dim];
    let mut signal = vec![false; n];
    for (i, row) in values.chunks_mut(dim).enumerate() {
        let s = eps > 0.0 && rng.random::<f64>() < eps;
        signal[i] = s;
        model.draw(rng, s, row);
    }
    (values, signal)
}

fn batch(model: &Model, n: usize, hypothesis: Hypothesis, seed: u64, values: Vec<f64>, signal: Vec<bool>) -> SampleBatch {
    SampleBatch {
        family: model.spec().family().to_string(),
        n,
        dim: model.dim(),
        columns: model.columns(),
        hypothesis,
        seed,
        values,
        signal,
    }
}

/// `n` iid draws from the null law.
pub fn sample_null(spec: &ModelSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    check_n(n)?;
    let model = Model::new(spec, calibration_n(n))?;
    let mut rng = stream(seed, Purpose::NullSample, 0);
    let (values, signal) = fill_batch(&model, n, 0.0, &mut rng);
    Ok(batch(&model, n, Hypothesis::Null, seed, values, signal))
}

/// `n` iid draws from `(1 - eps) P_n + eps Q_n` with `eps = n^-beta`.
pub fn sample_alternative(spec: &ModelSpec, n: usize, beta: f64, seed: u64) -> Result<SampleBatch> {
    check_n(n)?;
    check_beta(beta)?;
    let model = Model::new(spec, calibration_n(n))?;
    let mut rng = stream(seed, Purpose::AlternativeSample, 0);
    let eps = (n as f64).powf(-beta);
    let (values, signal) = fill_batch(&model, n, eps, &mut rng);
    Ok(batch(&model, n, Hypothesis::Alternative { beta }, seed, values, signal))
}

/// Log-LR values of a batch under the model at its own `n`.
pub fn batch_log_lr(spec: &ModelSpec, batch: &SampleBatch) -> Result<Vec<f64>> {
    let model = Model::new(spec, calibration_n(batch.n))?;
    batch.rows().map(|r| model.log_lr(r)).collect()
}

/// `log(q_n / p_n)` at one observation, `n >= 3` real.
pub fn log_lr(spec: &ModelSpec, observation: &[f64], n: f64) -> Result<f64> {
    Model::new(spec, n)?.log_lr(observation)
}

/// `P(q_n / p_n > t)` under the null.
pub fn null_lr_tail(spec: &ModelSpec, t: f64, n: f64) -> Result<TailProbability> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    Ok(Model::new(spec, n)?.null_log_tail(t.ln()))
}

/// Monte Carlo estimate of `P(log L > ell)` from `draws` null samples.
pub fn monte_carlo_null_tail(model: &Model, ell: f64, draws: usize, seed: u64) -> TailProbability {
    let mut rng = stream(seed, Purpose::MonteCarlo, 0);
    let mut row = vec![0.0; model.dim()];
    let mut hits = 0usize;
    for _ in 0..draws {
        model.draw(&mut rng, false, &mut row);
        if model.log_lr_unchecked(&row) > ell {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    TailProbability { value: p, method: TailMethod::MonteCarlo, error: (p * (1.0 - p) / draws as f64).sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVerdict {
    Bounded,
    Diverging,
}

/// `(1 / log n) log E[L^gamma]` along a list of sample sizes.
#[derive(Debug, Clone, Serialize)]
pub struct TailConditionReport {
    pub family: String,
    pub gamma: f64,
    pub n: Vec<f64>,
    #[serde(serialize_with = "serialize_ext_vec")]
    pub estimates: Vec<f64>,
    /// Least-squares slope of the estimates against `log n`; `inf` if any
    /// estimate is infinite.
    #[serde(with = "serde_ext")]
    pub slope: f64,
    pub verdict: TailVerdict,
}

fn serialize_ext_vec<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element(&crate::extended::format_ext(*x))?;
        }
    }
    seq.end()
}

/// Growth allowed in the slope against `log n` before the moment sequence
/// counts as diverging.
pub const TAIL_SLOPE_TOL: f64 = 0.05;

/// Estimates `(1 / log n) log E_null[(q_n / p_n)^gamma]` for each `n`.
///
/// The verdict is `Diverging` when any estimate is infinite or the values
/// grow with `log n` faster than [`TAIL_SLOPE_TOL`], `Bounded` otherwise.
pub fn tail_condition_estimate(spec: &ModelSpec, gamma: f64, n_list: &[f64]) -> Result<TailConditionReport> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(invalid("gamma", format!("must be a finite number above 1, got {gamma}")));
    }
    if n_list.len() < 3 {
        return Err(invalid("n_list", "needs at least 3 values"));
    }
    if n_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("n_list", "must be strictly increasing"));
    }
    let mut estimates = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let model = Model::new(spec, n)?;
        estimates.push(model.log_moment(gamma) / n.ln());
    }
    let any_inf = estimates.iter().any(|e| !e.is_finite());
    let slope = if any_inf {
        INF
    } else {
        let x: Vec<f64> = n_list.iter().map(|n| n.ln()).collect();
        ls_slope(&x, &estimates)
    };
    let verdict = if any_inf || slope > TAIL_SLOPE_TOL { TailVerdict::Diverging } else { TailVerdict::Bounded };
    Ok(TailConditionReport { family: spec.family().to_string(), gamma, n: n_list.to_vec(), estimates, slope, verdict })
}

/// A documented set of specs with closed-form boundaries: every family on
/// its parameter grid.
pub fn closed_form_grid() -> Vec<ModelSpec> {
    let rs = [0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0];
    let mut out = Vec::new();
    for &r in &rs {
        out.push(ModelSpec::Idj { r });
        out.push(ModelSpec::SbmPair { r });
        out.push(ModelSpec::SbmReduced { r });
        out.push(ModelSpec::LowRank { r, k: 1, q: vec![vec![1.0, 0.0], vec![0.0, 1.0]] });
    }
    for &r in &[0.1, 0.3, 0.8] {
        out.push(ModelSpec::brownian_cosine(r, 64));
        out.push(ModelSpec::MultivariateGaussian {
            r,
            u: vec![0.6, 0.8],
            sigma: vec![vec![1.0, 0.3], vec![0.3, 2.0]],
        });
        out.push(ModelSpec::MixtureOfMixturesI {
            r,
            u1: vec![1.0, 0.0],
            u2: vec![0.6, 0.8],
        });
    }
    for &r in &[0.05, 0.1, 0.2, 0.3, 0.5, 1.0] {
        out.push(ModelSpec::MixtureOfMixturesII { r, u: vec![1.0, 0.0], v: vec![0.0, 1.0] });
    }
    for &sigma2 in &[0.25, 0.5, 2.0, 4.0] {
        for &r in &[0.05, 0.2, 0.5, 1.5] {
            out.push(ModelSpec::Heteroscedastic { r, sigma2 });
        }
    }
    for &rho in &[-0.8, -0.2, 0.2, 0.8] {
        for &r in &[0.05, 0.2, 0.5, 1.5] {
            out.push(ModelSpec::CorrelatedPairs { r, rho });
        }
    }
    for &(r, rho) in &[(0.2, 0.1), (0.5, 0.1), (0.2, 0.5), (0.5, 0.3), (0.8, 0.02), (1.5, 0.4), (0.1, 1.0)] {
        out.push(ModelSpec::SideInfo { r, rho });
    }
    out
}
