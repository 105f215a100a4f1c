//! Exact magnetization law of the Curie–Weiss model and its mean-field limit.
//!
//! With spins `x_i in {-1, 1}` and `S = sum x_i`, the Hamiltonian
//! `(theta/N) sum_{i<j} x_i x_j + theta mu S` depends on `S` only, so the law
//! of `S` is a weighted binomial over the `N + 1` levels `S = N - 2j`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numeric::{golden_max, linspace, log_sum_exp};

/// Largest spin count for which the exact law is computed.
pub const MAX_SPINS: usize = 20_000;

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Mean-field free energy
/// `-theta/2 (1 - m^2) + theta mu m - h((1+m)/2) - h((1-m)/2)`, `h(x) = x log x`.
pub fn phi_mf(m: f64, theta: f64, mu: f64) -> f64 {
    if !(-1.0..=1.0).contains(&m) {
        return f64::NEG_INFINITY;
    }
    -0.5 * theta * (1.0 - m * m) + theta * mu * m - xlogx(0.5 * (1.0 + m)) - xlogx(0.5 * (1.0 - m))
}

/// `max_{|m| <= 1} phi_mf(m)` and its maximizer.
///
/// A 1001-point scan picks the bracket, golden-section search refines it.
/// For `mu = 0` the problem is symmetric and the nonnegative maximizer is
/// returned.
pub fn m_star(theta: f64, mu: f64) -> (f64, f64) {
    let grid = linspace(-1.0, 1.0, 1001);
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &m) in grid.iter().enumerate() {
        let v = phi_mf(m, theta, mu);
        // `>=` keeps the right-most maximizer among ties.
        if v >= best_val {
            best_val = v;
            best = i;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (m, v) = golden_max(|m| phi_mf(m, theta, mu), lo, hi, 1e-12);
    if v >= best_val {
        (m, v)
    } else {
        (grid[best], best_val)
    }
}

/// Exact law of the magnetization sum `S` on `N` spins.
#[derive(Debug, Clone, Serialize)]
pub struct MagnetizationLaw {
    pub spins: usize,
    /// Level `j` carries `S = N - 2j`.
    pub sums: Vec<i64>,
    pub log_pmf: Vec<f64>,
    pub pmf: Vec<f64>,
    /// `log Z_N(theta, mu)`.
    pub log_partition: f64,
}

impl MagnetizationLaw {
    /// `P(S > s)`.
    pub fn upper_tail(&self, s: f64) -> f64 {
        self.sums
            .iter()
            .zip(&self.pmf)
            .filter(|(&k, _)| k as f64 > s)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Log binomial coefficients `log C(n, j)` for `j = 0..=n`.
fn log_binomials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    lf.push(0.0);
    for i in 1..=n {
        lf.push(lf[i - 1] + (i as f64).ln());
    }
    (0..=n).map(|j| lf[n] - lf[j] - lf[n - j]).collect()
}

/// Exact pmf of `S` together with `log Z_N(theta, mu)`.
pub fn curie_weiss_magnetization_law(theta: f64, mu: f64, spins: usize) -> Result<MagnetizationLaw> {
    if spins == 0 || spins > MAX_SPINS {
        return Err(invalid("N", format!("spin count must lie in 1..={MAX_SPINS}, got {spins}")));
    }
    if !theta.is_finite() || !mu.is_finite() {
        return Err(invalid("theta", "theta and mu must be finite"));
    }
    let nf = spins as f64;
    let lb = log_binomials(spins);
    let sums: Vec<i64> = (0..=spins).map(|j| spins as i64 - 2 * j as i64).collect();
    let log_w: Vec<f64> = sums
        .iter()
        .zip(&lb)
        .map(|(&k, &c)| {
            let k = k as f64;
            c + theta * (k * k - nf) / (2.0 * nf) + theta * mu * k
        })
        .collect();
    let log_partition = log_sum_exp(&log_w);
    let log_pmf: Vec<f64> = log_w.iter().map(|w| w - log_partition).collect();
    let pmf = log_pmf.iter().map(|l| l.exp()).collect();
    Ok(MagnetizationLaw { spins, sums, log_pmf, pmf, log_partition })
}

/// `N = ceil(log n)`.
pub fn spins_for(n: f64) -> usize {
    n.ln().ceil().max(1.0) as usize
}
