//! Large-deviation rate functions of the normalized log-likelihood ratio
//! `log(q_n/p_n)(X) / log n` under the null.
//!
//! A [`RateFunction`] is a map `I: R -> [0, inf]` with an interval domain
//! `D = {I < inf}`. It is stored as a closed-form description (a
//! [`RateForm`]) rather than a closure, so it can be serialized, compared and
//! shared across threads.

pub(crate) mod catalog;
mod legendre;
mod quantile;

pub use catalog::analytic_rate;
pub use legendre::{
    cgf_convergence_probe, conjugate_at, exponential_family_cgf, legendre_transform,
    ConvergenceProbe, LimitCgf,
};
pub use quantile::{rate_from_quantile_asymptotics, QuantileAsymptotics};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::extended::INF;
use crate::models::curie_weiss::{m_star, phi_mf};
use crate::numeric::linspace;

/// Closed-form shape of a rate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RateForm {
    /// `(t + r)^2 / (4 r)`.
    Gaussian { r: f64 },
    /// `curvature (t - center)^2`.
    Parabola { center: f64, curvature: f64 },
    Heteroscedastic { r: f64, sigma2: f64 },
    /// `overlap` is the inner product of the two signal directions.
    MixtureI { r: f64, overlap: f64 },
    MixtureII { r: f64 },
    LowRank { r: f64 },
    CorrelatedPairs { r: f64, rho: f64 },
    /// `0` at `-r`, `r` at `+r`, infinite elsewhere.
    TwoPoint { r: f64 },
    SideInfo { r: f64, rho: f64 },
    CurieWeiss { theta: f64, mu: f64 },
    /// `t + r` on `t >= -r`.
    SparseExponential { r: f64 },
    /// `0` at one point, infinite elsewhere.
    PointMass { at: f64 },
    /// Values on a grid, linearly interpolated; `None` marks `+inf`.
    Tabulated { t: Vec<f64>, values: Vec<Option<f64>> },
}

#[derive(Serialize, Deserialize)]
struct Description {
    family_tag: String,
    #[serde(flatten)]
    form: RateForm,
}

/// A rate function with its domain, convexity flag and provenance label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "Description", try_from = "Description")]
pub struct RateFunction {
    family_tag: String,
    form: RateForm,
    is_convex: bool,
    domain_lo: f64,
    domain_hi: f64,
    /// `(M*(theta, 0), M*(theta, mu))` for the Curie–Weiss form.
    cw_free_energy: Option<(f64, f64)>,
}

impl From<RateFunction> for Description {
    fn from(r: RateFunction) -> Self {
        Description { family_tag: r.family_tag, form: r.form }
    }
}

impl TryFrom<Description> for RateFunction {
    type Error = Error;
    fn try_from(d: Description) -> Result<Self> {
        RateFunction::new(&d.family_tag, d.form)
    }
}

impl PartialEq for RateFunction {
    fn eq(&self, other: &Self) -> bool {
        self.family_tag == other.family_tag && self.form == other.form
    }
}

fn finite_positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a finite positive number, got {x}")))
    }
}

impl RateFunction {
    /// Builds a rate function from its form, checking parameters and
    /// computing the domain. Convexity is declared per form; tabulated forms
    /// are checked on their own grid.
    pub fn new(family_tag: &str, form: RateForm) -> Result<Self> {
        let mut cw_free_energy = None;
        let (lo, hi, convex) = match &form {
            RateForm::Gaussian { r } => {
                finite_positive("r", *r)?;
                (-INF, INF, true)
            }
            RateForm::Parabola { center, curvature } => {
                if !center.is_finite() || !(curvature.is_finite() && *curvature >= 0.0) {
                    return Err(invalid("curvature", "needs a finite center and curvature >= 0"));
                }
                (-INF, INF, true)
            }
            RateForm::Heteroscedastic { r, sigma2 } => {
                finite_positive("r", *r)?;
                finite_positive("sigma2", *sigma2)?;
                if *sigma2 == 1.0 {
                    return Err(invalid("sigma2", "must differ from 1"));
                }
                if *sigma2 > 1.0 {
                    (-r / (sigma2 - 1.0), INF, true)
                } else {
                    (-INF, r / (1.0 - sigma2), true)
                }
            }
            RateForm::MixtureI { r, overlap } => {
                finite_positive("r", *r)?;
                if !(overlap.abs() < 1.0) {
                    return Err(invalid("overlap", "must lie in (-1, 1)"));
                }
                (-INF, INF, true)
            }
            RateForm::MixtureII { r } => {
                finite_positive("r", *r)?;
                (-INF, INF, true)
            }
            RateForm::LowRank { r } => {
                finite_positive("r", *r)?;
                (0.0, INF, true)
            }
            RateForm::CorrelatedPairs { r, rho } => {
                finite_positive("r", *r)?;
                if !(rho.abs() < 1.0 && *rho != 0.0) {
                    return Err(invalid("rho", "must lie in (-1, 1) and differ from 0"));
                }
                (-INF, INF, true)
            }
            RateForm::TwoPoint { r } => {
                finite_positive("r", *r)?;
                (-r, *r, false)
            }
            RateForm::SideInfo { r, rho } => {
                finite_positive("r", *r)?;
                finite_positive("rho", *rho)?;
                // The minimum of two parabolas crossing at t = 0 has a
                // concave kink there.
                (-INF, INF, false)
            }
            RateForm::CurieWeiss { theta, mu } => {
                finite_positive("theta", *theta)?;
                finite_positive("mu", *mu)?;
                let m0 = m_star(*theta, 0.0).1;
                let mm = m_star(*theta, *mu).1;
                cw_free_energy = Some((m0, mm));
                let shift = m0 - mm;
                (shift - theta * mu, shift + theta * mu, *theta <= 1.0)
            }
            RateForm::SparseExponential { r } => {
                finite_positive("r", *r)?;
                (-r, INF, true)
            }
            RateForm::PointMass { at } => {
                if !at.is_finite() {
                    return Err(invalid("at", "must be finite"));
                }
                (*at, *at, true)
            }
            RateForm::Tabulated { t, values } => {
                if t.len() < 2 || t.len() != values.len() {
                    return Err(invalid("t", "needs at least 2 points and one value per point"));
                }
                if t.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(invalid("t", "must be strictly increasing"));
                }
                if values.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("values", "must be finite and nonnegative or null"));
                }
                let first = values.iter().position(|v| v.is_some());
                let last = values.iter().rposition(|v| v.is_some());
                match (first, last) {
                    (Some(a), Some(b)) => (t[a], t[b], table_is_convex(t, values)),
                    _ => return Err(invalid("values", "rate is infinite everywhere")),
                }
            }
        };
        Ok(RateFunction {
            family_tag: family_tag.to_string(),
            form,
            is_convex: convex,
            domain_lo: lo,
            domain_hi: hi,
            cw_free_energy,
        })
    }

    /// Convenience constructor for `I(t) = curvature (t - center)^2`.
    pub fn parabola(center: f64, curvature: f64) -> Result<Self> {
        RateFunction::new("parabola", RateForm::Parabola { center, curvature })
    }

    /// Convenience constructor for a rate that is `0` at `at` and `inf` elsewhere.
    pub fn point_mass(at: f64) -> Result<Self> {
        RateFunction::new("point_mass", RateForm::PointMass { at })
    }

    pub fn family_tag(&self) -> &str {
        &self.family_tag
    }

    pub fn form(&self) -> &RateForm {
        &self.form
    }

    pub fn is_convex(&self) -> bool {
        self.is_convex
    }

    /// Left end of the domain (may be `-inf`).
    pub fn domain_lo(&self) -> f64 {
        self.domain_lo
    }

    /// Right end of the domain (may be `+inf`).
    pub fn domain_hi(&self) -> f64 {
        self.domain_hi
    }

    /// `I(t)`; `+inf` outside the domain. Never negative, never NaN.
    pub fn eval(&self, t: f64) -> f64 {
        if t.is_nan() || t < self.domain_lo || t > self.domain_hi {
            return INF;
        }
        let v = match &self.form {
            RateForm::Gaussian { r } => (t + r) * (t + r) / (4.0 * r),
            RateForm::Parabola { center, curvature } => curvature * (t - center) * (t - center),
            RateForm::Heteroscedastic { r, sigma2 } => {
                let w = (sigma2 - 1.0) * t + r;
                if w < 0.0 {
                    INF
                } else {
                    let d = w.sqrt() - (r / sigma2).sqrt();
                    sigma2 / ((sigma2 - 1.0) * (sigma2 - 1.0)) * d * d
                }
            }
            RateForm::MixtureI { r, overlap } => {
                let s = (t + r) * (t + r);
                if t >= -r {
                    s / (4.0 * r)
                } else {
                    s / (2.0 * r * (1.0 + overlap))
                }
            }
            RateForm::MixtureII { r } => {
                let s = (t + 2.0 * r) * (t + 2.0 * r);
                if t < -2.0 * r {
                    s / (4.0 * r)
                } else if t <= 2.0 * r {
                    s / (8.0 * r)
                } else {
                    s / (4.0 * r) - t
                }
            }
            RateForm::LowRank { r } => (r + 1.0) * t / r,
            RateForm::CorrelatedPairs { r, rho } => {
                let s = rho * t + r;
                if s <= (1.0 + rho) * r / 4.0 {
                    (rho - 1.0) * (r + 2.0 * rho * t) / (2.0 * rho * rho)
                } else {
                    let d = s.sqrt() - (r / (1.0 + rho)).sqrt();
                    (1.0 + rho) / (rho * rho) * d * d
                }
            }
            RateForm::TwoPoint { r } => {
                if t == -r {
                    0.0
                } else if t == *r {
                    *r
                } else {
                    INF
                }
            }
            RateForm::SideInfo { r, rho } => {
                let a = (t - r + rho) * (t - r + rho) / (4.0 * rho) + r;
                let b = (t + r + rho) * (t + r + rho) / (4.0 * rho);
                a.min(b)
            }
            RateForm::CurieWeiss { theta, mu } => {
                let (m0, mm) = self.cw_free_energy.expect("set by constructor");
                let m = ((t - m0 + mm) / (theta * mu)).clamp(-1.0, 1.0);
                m0 - phi_mf(m, *theta, 0.0)
            }
            RateForm::SparseExponential { r } => t + r,
            RateForm::PointMass { at } => {
                if t == *at {
                    0.0
                } else {
                    INF
                }
            }
            RateForm::Tabulated { t: grid, values } => table_eval(grid, values, t),
        };
        if v.is_nan() {
            INF
        } else {
            v.max(0.0)
        }
    }

    /// Points where the rate has a kink, a domain endpoint, or a zero.
    /// Solvers refine around every one of them.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = match &self.form {
            RateForm::Gaussian { r } => vec![-r],
            RateForm::Parabola { center, .. } => vec![*center],
            RateForm::Heteroscedastic { r, sigma2 } => vec![-r / sigma2],
            RateForm::MixtureI { r, .. } => vec![-r],
            RateForm::MixtureII { r } => vec![-2.0 * r, 2.0 * r],
            RateForm::LowRank { .. } => vec![0.0],
            RateForm::CorrelatedPairs { r, rho } => {
                vec![r * (rho - 3.0) / (4.0 * rho), -r / (1.0 + rho)]
            }
            RateForm::TwoPoint { r } => vec![-r, *r],
            RateForm::SideInfo { r, rho } => vec![0.0, -r - rho, r - rho],
            RateForm::CurieWeiss { theta, mu } => {
                let (m0, mm) = self.cw_free_energy.expect("set by constructor");
                let mz = m_star(*theta, 0.0).0.abs();
                let shift = m0 - mm;
                vec![shift - theta * mu * mz, shift + theta * mu * mz]
            }
            RateForm::SparseExponential { r } => vec![-r],
            RateForm::PointMass { at } => vec![*at],
            RateForm::Tabulated { t, values } => t
                .iter()
                .zip(values)
                .filter(|(_, v)| **v == Some(0.0))
                .map(|(t, _)| *t)
                .collect(),
        };
        for end in [self.domain_lo, self.domain_hi] {
            if end.is_finite() {
                pts.push(end);
            }
        }
        pts.retain(|p| p.is_finite());
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }

    /// Default evaluation grid: 2048 points over `[max(lo, -8), min(hi, 8)]`.
    pub fn default_grid(&self) -> GridConfig {
        let lo = self.domain_lo.max(-8.0);
        let hi = self.domain_hi.min(8.0);
        if lo < hi {
            GridConfig { lo, hi, points: 2048 }
        } else {
            GridConfig { lo: lo - 1.0, hi: lo + 1.0, points: 2049 }
        }
    }
}

fn table_eval(grid: &[f64], values: &[Option<f64>], t: f64) -> f64 {
    let n = grid.len();
    if t < grid[0] || t > grid[n - 1] {
        return INF;
    }
    let i = grid.partition_point(|&g| g <= t);
    let i = i.saturating_sub(1).min(n - 1);
    if grid[i] == t {
        return values[i].unwrap_or(INF);
    }
    match (values[i], values.get(i + 1).copied().flatten()) {
        (Some(a), Some(b)) => {
            let w = (t - grid[i]) / (grid[i + 1] - grid[i]);
            a + w * (b - a)
        }
        _ => INF,
    }
}

fn table_is_convex(t: &[f64], values: &[Option<f64>]) -> bool {
    let first = values.iter().position(|v| v.is_some()).unwrap_or(0);
    let last = values.iter().rposition(|v| v.is_some()).unwrap_or(0);
    if values[first..=last].iter().any(|v| v.is_none()) {
        return false;
    }
    for i in (first + 1)..last {
        let (a, b, c) = (values[i - 1].unwrap(), values[i].unwrap(), values[i + 1].unwrap());
        let w = (t[i] - t[i - 1]) / (t[i + 1] - t[i - 1]);
        if b > a + w * (c - a) + 1e-9 {
            return false;
        }
    }
    true
}

/// An evenly spaced evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let g = GridConfig { lo, hi, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid("grid", "needs finite lo < hi"));
        }
        if self.points < 2 {
            return Err(invalid("grid.points", "must be at least 2"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }
}

/// Left derivative `I'_-(t)` of a convex rate.
///
/// Outside the domain the extension rule applies: `-inf` to the left,
/// `+inf` to the right. At the left endpoint the left derivative is `-inf`.
/// Inside, backward differences with step `h` are combined by Richardson
/// extrapolation and halved until successive estimates agree to `1e-7`.
pub fn left_derivative(rate: &RateFunction, t: f64, h: f64) -> Result<f64> {
    if !rate.is_convex() {
        return Err(Error::Unsupported(format!(
            "left derivative of the non-convex rate '{}'",
            rate.family_tag()
        )));
    }
    if !(h > 0.0) {
        return Err(invalid("h", "step must be positive"));
    }
    let (lo, hi) = (rate.domain_lo(), rate.domain_hi());
    if t <= lo {
        return Ok(f64::NEG_INFINITY);
    }
    if t > hi {
        return Ok(INF);
    }
    let it = rate.eval(t);
    if it == INF {
        return Ok(INF);
    }
    let mut step = if lo.is_finite() { h.min(0.5 * (t - lo)) } else { h };
    let diff = |s: f64| (it - rate.eval(t - s)) / s;
    let richardson = |s: f64| 2.0 * diff(0.5 * s) - diff(s);
    let mut prev = richardson(step);
    for _ in 0..40 {
        step *= 0.5;
        let next = richardson(step);
        if (next - prev).abs() < 1e-7 || step < 1e-10 {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// Number of sampled midpoint-convexity violations on `points` evenly spaced
/// points over `[lo, hi]`: triples `(t_{i-s}, t_i, t_{i+s})` for every span
/// `s` with finite outer values and `I(t_i) > (I(t_{i-s}) + I(t_{i+s}))/2 + 1e-9`.
pub fn midpoint_violations(rate: &RateFunction, lo: f64, hi: f64, points: usize) -> usize {
    let grid = linspace(lo, hi, points);
    let vals: Vec<f64> = grid.iter().map(|&t| rate.eval(t)).collect();
    let mut count = 0;
    for i in 1..points.saturating_sub(1) {
        let max_span = i.min(points - 1 - i);
        for s in 1..=max_span {
            let (a, b) = (vals[i - s], vals[i + s]);
            if a.is_finite() && b.is_finite() && vals[i] > 0.5 * (a + b) + 1e-9 {
                count += 1;
            }
        }
    }
    count
}

/// Default convexity check range: the domain clipped to `[-8, 8]`.
pub fn convexity_range(rate: &RateFunction) -> (f64, f64) {
    let g = rate.default_grid();
    (g.lo, g.hi)
}
