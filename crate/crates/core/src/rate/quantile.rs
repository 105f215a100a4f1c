use std::sync::Arc;

use super::{GridConfig, RateForm, RateFunction};
use crate::error::{invalid, Result};
use crate::extended::INF;
use crate::numeric::{bisect, linspace};

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Limits `alpha_0(s)` and `alpha_1(s)` of the normalized log-likelihood
/// ratio evaluated at the lower and upper null quantiles of level `n^{-s}`.
#[derive(Clone)]
pub struct QuantileAsymptotics {
    pub alpha0: Curve,
    pub alpha1: Curve,
}

/// Number of points in the level-set scan over `[0, s_max]`.
const S_POINTS: usize = 4096;

impl QuantileAsymptotics {
    pub fn new(
        alpha0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        alpha1: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        QuantileAsymptotics { alpha0: Arc::new(alpha0), alpha1: Arc::new(alpha1) }
    }

    /// `min(I_0(t), I_1(t))` with `I_j(t) = inf{s >= 0 : alpha_j(s) = t}`.
    pub fn rate_at(&self, t: f64, s_max: f64) -> f64 {
        let s = linspace(0.0, s_max, S_POINTS);
        let a0: Vec<f64> = s.iter().map(|&x| (self.alpha0)(x)).collect();
        let a1: Vec<f64> = s.iter().map(|&x| (self.alpha1)(x)).collect();
        smallest_root(&*self.alpha0, &s, &a0, t).min(smallest_root(&*self.alpha1, &s, &a1, t))
    }
}

/// Smallest `s` on the scan with `alpha(s) = t`, refined by bisection to a
/// bracket of width `1e-10`; `+inf` if the level is never attained.
fn smallest_root(alpha: &dyn Fn(f64) -> f64, s: &[f64], vals: &[f64], t: f64) -> f64 {
    for i in 0..s.len() {
        let d = vals[i] - t;
        if d == 0.0 {
            return s[i];
        }
        if i + 1 < s.len() {
            let e = vals[i + 1] - t;
            if d.is_finite() && e.is_finite() && (d < 0.0) != (e < 0.0) && e != 0.0 {
                return bisect(|x| alpha(x) - t, s[i], s[i + 1], 1e-10);
            }
        }
    }
    INF
}

/// Builds `I = I_0 ∧ I_1` on the points of `grid` by inverting each curve.
///
/// The result is tabulated; its convexity flag is read off the table.
pub fn rate_from_quantile_asymptotics(
    qa: &QuantileAsymptotics,
    s_max: f64,
    grid: &GridConfig,
) -> Result<RateFunction> {
    grid.validate()?;
    if !(s_max.is_finite() && s_max > 0.0) {
        return Err(invalid("s_max", "must be a finite positive number"));
    }
    let s = linspace(0.0, s_max, S_POINTS);
    let a0: Vec<f64> = s.iter().map(|&x| (qa.alpha0)(x)).collect();
    let a1: Vec<f64> = s.iter().map(|&x| (qa.alpha1)(x)).collect();
    if a0.iter().chain(&a1).any(|v| !v.is_finite()) {
        return Err(invalid("alpha", "curves must be finite on [0, s_max]"));
    }
    let pts = grid.points();
    let values = pts
        .iter()
        .map(|&t| {
            let v = smallest_root(&*qa.alpha0, &s, &a0, t).min(smallest_root(&*qa.alpha1, &s, &a1, t));
            if v.is_finite() {
                Some(v)
            } else {
                None
            }
        })
        .collect();
    RateFunction::new("quantile_asymptotics", RateForm::Tabulated { t: pts, values })
}
