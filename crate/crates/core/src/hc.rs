//! Higher Criticism statistics and tests.
//!
//! `hc_star` takes the supremum of `|T_n({L > t})|` over thresholds `t`.
//! The count is piecewise constant in `t`, so the supremum is attained at a
//! sample value `v` or in the limit `t -> v-`; both are evaluated for every
//! distinct `v`. Events whose null probability falls outside
//! `(lo, 1 - lo)` are skipped, with `lo = 1 / (10 n^2)` by default.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The clamp `1 / (10 n^2)` on event probabilities.
pub fn default_clamp(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (10.0 * n * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Retain,
}

/// What the reported threshold is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScale {
    /// The scale of the values passed to `hc_star` (for example log-LR).
    Statistic,
    PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcOutcome {
    pub statistic: f64,
    /// Where the supremum is attained; `None` if every event was clamped.
    pub argmax_threshold: Option<f64>,
    /// `true` when the supremum is the left limit at `argmax_threshold`.
    pub left_limit: bool,
    pub scale: ThresholdScale,
    pub cutoff: Option<f64>,
    pub delta: Option<f64>,
    pub decision: Option<Decision>,
    pub evaluation_count: usize,
}

impl HcOutcome {
    fn untested(statistic: f64, argmax: Option<f64>, left_limit: bool, scale: ThresholdScale, evals: usize) -> Self {
        HcOutcome {
            statistic,
            argmax_threshold: argmax,
            left_limit,
            scale,
            cutoff: None,
            delta: None,
            decision: None,
            evaluation_count: evals,
        }
    }

    /// Adds the cutoff and decision of the HC test at `(n, delta)`.
    pub fn tested(mut self, n: usize, delta: f64) -> Result<Self> {
        let t = hc_test(self.statistic, n, delta)?;
        self.cutoff = t.cutoff;
        self.delta = t.delta;
        self.decision = t.decision;
        Ok(self)
    }
}

/// `(count - n p) / sqrt(n p (1 - p))`.
pub fn t_statistic(count: usize, p: f64, n: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateEvent(p));
    }
    if count > n {
        return Err(invalid("count", format!("must not exceed n = {n}, got {count}")));
    }
    let nf = n as f64;
    Ok((count as f64 - nf * p) / (nf * p * (1.0 - p)).sqrt())
}

struct Best {
    value: f64,
    at: Option<f64>,
    left: bool,
    evals: usize,
}

impl Best {
    fn new() -> Self {
        Best { value: 0.0, at: None, left: false, evals: 0 }
    }

    fn offer(&mut self, count: usize, p: f64, n: usize, lo: f64, at: f64, left: bool) {
        if !(p > lo && p < 1.0 - lo) {
            return;
        }
        self.evals += 1;
        let nf = n as f64;
        let t = ((count as f64 - nf * p) / (nf * p * (1.0 - p)).sqrt()).abs();
        if t > self.value || self.at.is_none() {
            self.value = t;
            self.at = Some(at);
            self.left = left;
        }
    }
}

fn check_clamp(clamp: f64) -> Result<()> {
    if !(0.0..0.5).contains(&clamp) {
        return Err(invalid("clamp", format!("must lie in [0, 1/2), got {clamp}")));
    }
    Ok(())
}

/// HC* over the events `{L > t}`.
///
/// `values` may be the likelihood ratios themselves or any strictly
/// increasing transform of them (log-LR is the usual choice); `tail(v)`
/// must return the null probability that one observation exceeds `v` on
/// the same scale. `clamp` defaults to [`default_clamp`].
pub fn hc_star(values: &[f64], tail: impl Fn(f64) -> f64, clamp: Option<f64>) -> Result<HcOutcome> {
    if values.is_empty() {
        return Err(Error::EmptyInput("hc_star needs at least one value".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("values", "must not contain NaN"));
    }
    let n = values.len();
    let lo = clamp.unwrap_or_else(|| default_clamp(n));
    check_clamp(lo)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = Best::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == v {
            j += 1;
        }
        // Left limit t -> v-: the event {L >= v}.
        best.offer(n - i, tail(v.next_down()), n, lo, v, true);
        // At t = v: the event {L > v}.
        best.offer(n - j, tail(v), n, lo, v, false);
        i = j;
    }
    Ok(HcOutcome::untested(best.value, best.at, best.left, ThresholdScale::Statistic, best.evals))
}

/// The classical Higher Criticism over upper-tail p-values.
pub fn hc_classical(p_values: &[f64], clamp: Option<f64>) -> Result<HcOutcome> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("hc_classical needs at least one p-value".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(invalid("p_values", format!("must lie strictly inside (0, 1), got {p}")));
    }
    let n = p_values.len();
    let lo = clamp.unwrap_or_else(|| default_clamp(n));
    check_clamp(lo)?;
    let mut sorted = p_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = Best::new();
    let mut i = 0;
    while i < n {
        let u = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == u {
            j += 1;
        }
        // #{p <= u} at u, and #{p < u} as u' -> u-.
        best.offer(j, u, n, lo, u, false);
        best.offer(i, u, n, lo, u, true);
        i = j;
    }
    Ok(HcOutcome::untested(best.value, best.at, best.left, ThresholdScale::PValue, best.evals))
}

/// `sqrt(2 (1 + delta) log log n)`.
pub fn hc_cutoff(n: usize, delta: f64) -> Result<f64> {
    if n < 16 {
        return Err(invalid("n", format!("must be at least 16 for a positive cutoff, got {n}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    Ok((2.0 * (1.0 + delta) * (n as f64).ln().ln()).sqrt())
}

/// Rejects iff `statistic > sqrt(2 (1 + delta) log log n)`.
pub fn hc_test(statistic: f64, n: usize, delta: f64) -> Result<HcOutcome> {
    let cutoff = hc_cutoff(n, delta)?;
    let decision = if statistic > cutoff { Decision::Reject } else { Decision::Retain };
    Ok(HcOutcome {
        statistic,
        argmax_threshold: None,
        left_limit: false,
        scale: ThresholdScale::Statistic,
        cutoff: Some(cutoff),
        delta: Some(delta),
        decision: Some(decision),
        evaluation_count: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    /// `sum log(1 + eps (L_i - 1))`.
    pub log_mixture_lr: f64,
    pub decision: Decision,
}

/// `log(1 - eps + eps e^ell)` without overflow or cancellation.
fn log_mix_term(ell: f64, eps: f64) -> f64 {
    if ell < 30.0 {
        (eps * ell.exp_m1()).ln_1p()
    } else {
        ell + eps.ln() + ((1.0 - eps) / eps * (-ell).exp()).ln_1p()
    }
}

fn oracle_eps(n: usize, beta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput("the oracle test needs at least one value".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    Ok((n as f64).powf(-beta))
}

/// Neyman–Pearson mixture test from log-likelihood ratios.
/// Rejects iff the log mixture likelihood ratio is strictly positive.
pub fn np_oracle_test_log(log_lr: &[f64], beta: f64) -> Result<OracleOutcome> {
    let eps = oracle_eps(log_lr.len(), beta)?;
    let total: f64 = log_lr.iter().map(|&l| log_mix_term(l, eps)).sum();
    if total.is_nan() {
        return Err(invalid("log_lr", "must not contain NaN"));
    }
    let decision = if total > 0.0 { Decision::Reject } else { Decision::Retain };
    Ok(OracleOutcome { log_mixture_lr: total, decision })
}

/// Neyman–Pearson mixture test from likelihood ratios `L_i > 0`.
pub fn np_oracle_test(lr_values: &[f64], beta: f64) -> Result<OracleOutcome> {
    if let Some(l) = lr_values.iter().find(|l| !(**l > 0.0)) {
        return Err(invalid("lr_values", format!("must be positive, got {l}")));
    }
    let logs: Vec<f64> = lr_values.iter().map(|l| l.ln()).collect();
    np_oracle_test_log(&logs, beta)
}
