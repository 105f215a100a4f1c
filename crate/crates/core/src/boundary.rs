//! Detection boundaries from a rate function.
//!
//! The main objective is `t - I(t) + min(1, I(t)) / 2`. Its supremum over
//! `t >= 0` (floored at 0) gives the upper bound `beta_upper_sharp`, and its
//! supremum over `t > 0` gives the lower bound `beta_lower_sharp`; when the
//! two agree the boundary `beta*` is their common value. All suprema are
//! taken by a coarse scan followed by golden-section refinement around the
//! best grid point, every breakpoint of the rate, and every point where
//! `I(t) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::{cap_one, penalized, serde_ext, serde_ext_opt, INF};
use crate::models::ModelSpec;
use crate::numeric::{bisect, golden_max, linspace};
use crate::rate::{left_derivative, midpoint_violations, RateForm, RateFunction};

/// Coarse grid size for every supremum.
pub const GRID_POINTS: usize = 2048;
/// Golden-section width on `t`.
const T_TOL: f64 = 1e-10;
/// Agreement needed between the two sharp bounds to declare `beta*`.
pub const AGREEMENT_TOL: f64 = 1e-6;

/// `t - I(t) + min(1, I(t)) / 2`, and `-inf` where `I(t) = inf`.
pub fn objective(rate: &RateFunction, t: f64) -> f64 {
    let i = rate.eval(t);
    if i == INF {
        f64::NEG_INFINITY
    } else {
        penalized(t, i) + 0.5 * cap_one(i)
    }
}

/// Right end of the search range for `t`.
pub fn search_cap(rate: &RateFunction) -> f64 {
    if rate.domain_hi().is_finite() {
        rate.domain_hi()
    } else {
        0.5 + f64::max(1.0, 4.0 * form_scale(rate.form()))
    }
}

fn form_scale(form: &RateForm) -> f64 {
    match form {
        RateForm::Gaussian { r }
        | RateForm::MixtureI { r, .. }
        | RateForm::MixtureII { r }
        | RateForm::LowRank { r }
        | RateForm::TwoPoint { r }
        | RateForm::SparseExponential { r } => *r,
        RateForm::Heteroscedastic { r, sigma2 } => r.max(*sigma2),
        RateForm::CorrelatedPairs { r, rho } | RateForm::SideInfo { r, rho } => r.max(rho.abs()),
        RateForm::CurieWeiss { theta, mu } => theta.max(*mu),
        RateForm::Parabola { center, curvature } => {
            center.abs().max(if *curvature > 0.0 { 1.0 / curvature } else { 1.0 })
        }
        RateForm::PointMass { at } => at.abs(),
        RateForm::Tabulated { t, .. } => t.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// Points in `[lo, hi]` where `I(t)` crosses the level 1.
fn unit_level_crossings(rate: &RateFunction, grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (rate.eval(w[0]) - 1.0, rate.eval(w[1]) - 1.0);
        if a.is_finite() && b.is_finite() && (a < 0.0) != (b < 0.0) {
            out.push(bisect(|t| rate.eval(t) - 1.0, w[0], w[1], 1e-14));
        }
    }
    out
}

/// Result of a one-dimensional supremum.
#[derive(Debug, Clone, Copy)]
struct Sup {
    t: f64,
    value: f64,
    refinements: usize,
}

/// `sup f` over `[lo, hi]`, or over `(lo, hi]` when `open_lo`.
///
/// `extra` are points (breakpoints, level crossings) that get evaluated and
/// refined on both sides. For the open case the left end is approached
/// along `lo + 10^-k`, `k = 1..=12`.
fn sup_on<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, open_lo: bool, extra: &[f64]) -> Sup {
    if !(hi >= lo) {
        return Sup { t: lo, value: f64::NEG_INFINITY, refinements: 0 };
    }
    let mut best = Sup { t: lo, value: f64::NEG_INFINITY, refinements: 0 };
    let consider = |best: &mut Sup, t: f64, v: f64| {
        if v > best.value {
            best.t = t;
            best.value = v;
        }
    };
    if hi == lo {
        if !open_lo {
            consider(&mut best, lo, f(lo));
        }
        return best;
    }
    let grid = linspace(lo, hi, GRID_POINTS);
    let step = grid[1] - grid[0];
    let floor = if open_lo { lo + 1e-12 * lo.abs().max(1.0) } else { lo };
    let vals: Vec<f64> = grid.iter().map(|&t| if open_lo && t == lo { f64::NEG_INFINITY } else { f(t) }).collect();
    for (&t, &v) in grid.iter().zip(&vals) {
        consider(&mut best, t, v);
    }
    if open_lo {
        for k in 1..=12 {
            let t = lo + 10f64.powi(-k) * lo.abs().max(1.0);
            if t <= hi {
                consider(&mut best, t, f(t));
            }
        }
    }
    // Local maxima of the coarse scan, plus every extra point.
    let mut centers: Vec<f64> = Vec::new();
    for i in 0..grid.len() {
        let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < grid.len() { vals[i + 1] } else { f64::NEG_INFINITY };
        if vals[i] > f64::NEG_INFINITY && vals[i] >= left && vals[i] >= right {
            centers.push(grid[i]);
        }
    }
    centers.sort_by(|a, b| f(*b).partial_cmp(&f(*a)).unwrap_or(std::cmp::Ordering::Equal));
    centers.truncate(8);
    for &p in extra {
        if p >= lo && p <= hi {
            if !(open_lo && p == lo) {
                consider(&mut best, p, f(p));
            }
            centers.push(p);
        }
    }
    let mut refinements = 0;
    for c in centers {
        for (a, b) in [(c - step, c), (c, c + step)] {
            let (a, b) = (a.max(floor), b.min(hi));
            if a < b {
                let (t, v) = golden_max(f, a, b, T_TOL);
                consider(&mut best, t, v);
                refinements += 1;
            }
        }
    }
    best.refinements = refinements;
    best
}

/// Condition flags for the optimality of the HC* test.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Conditions {
    /// Declared convex and no sampled midpoint-convexity violation.
    pub convex: bool,
    pub convexity_violations: usize,
    /// `I` is right-continuous at `0`.
    pub right_continuous_at_0: bool,
    /// `I` is right-continuous at the left end and left-continuous at the
    /// right end of its domain.
    pub endpoint_continuity: bool,
    /// Some `t >= 0` has a nonnegative objective.
    pub exists_nonneg_tstar: bool,
    pub t0_t1_finite: bool,
    /// The family is known to satisfy the moment tail condition.
    pub tail_condition_checked: bool,
    /// The two sharp bounds agree.
    pub sharp_bounds_agree: bool,
    /// All hypotheses hold, so the HC lower bound equals `beta*`.
    pub hc_optimal: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub grid_points: usize,
    pub refinements: usize,
    #[serde(with = "serde_ext")]
    pub t_cap: f64,
}

/// All boundary quantities of one rate function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub family_tag: String,
    #[serde(with = "serde_ext_opt")]
    pub beta_star: Option<f64>,
    #[serde(with = "serde_ext")]
    pub beta_upper_sharp: f64,
    #[serde(with = "serde_ext")]
    pub beta_lower_sharp: f64,
    #[serde(with = "serde_ext_opt")]
    pub beta_hc_lower: Option<f64>,
    #[serde(with = "serde_ext_opt")]
    pub t0: Option<f64>,
    #[serde(with = "serde_ext_opt")]
    pub t1: Option<f64>,
    #[serde(with = "serde_ext_opt")]
    pub closed_form: Option<f64>,
    pub conditions: Conditions,
    #[serde(with = "serde_ext")]
    pub argmax_t: f64,
    pub diagnostics: SolverDiagnostics,
    pub warnings: Vec<String>,
}

/// `beta_upper_sharp`, `beta_lower_sharp` and, when they agree, `beta*`.
pub fn solve_beta_star(rate: &RateFunction) -> BoundaryReport {
    let cap = search_cap(rate);
    let f = |t: f64| objective(rate, t);
    let scan = linspace(0.0, cap.max(1e-12), GRID_POINTS);
    let mut extra = rate.breakpoints();
    extra.extend(unit_level_crossings(rate, &scan));
    extra.push(0.0);
    let closed = sup_on(&f, 0.0, cap, false, &extra);
    let open = sup_on(&f, 0.0, cap, true, &extra);
    let mut warnings = Vec::new();
    if closed.value == f64::NEG_INFINITY {
        warnings.push("objective is -inf on t >= 0; degenerate rate".to_string());
    }
    let upper = 0.5 + closed.value.max(0.0);
    let lower = 0.5 + open.value;
    let beta_star = if lower.is_finite() && (upper - lower).abs() <= AGREEMENT_TOL {
        Some(upper)
    } else {
        None
    };
    BoundaryReport {
        family_tag: rate.family_tag().to_string(),
        beta_star,
        beta_upper_sharp: upper,
        beta_lower_sharp: lower,
        beta_hc_lower: None,
        t0: None,
        t1: None,
        closed_form: None,
        conditions: Conditions::default(),
        argmax_t: closed.t,
        diagnostics: SolverDiagnostics {
            grid_points: GRID_POINTS,
            refinements: closed.refinements + open.refinements,
            t_cap: cap,
        },
        warnings,
    }
}

/// Precomputed scan of `t - I(t)` and `I(t)` used by the HC bound.
struct HcScan<'a> {
    rate: &'a RateFunction,
    grid: Vec<f64>,
    step: f64,
    cap: f64,
    /// `suffix_gain[j]` = index of the max of `t - I(t)` over `grid[j..]`.
    suffix_gain: Vec<usize>,
    /// `suffix_rate[j]` = index of the min of `I` over `grid[j..]`.
    suffix_rate: Vec<usize>,
    extra: Vec<f64>,
}

impl<'a> HcScan<'a> {
    fn new(rate: &'a RateFunction, cap: f64) -> Self {
        let grid = linspace(0.0, cap, GRID_POINTS);
        let step = grid[1] - grid[0];
        let gain: Vec<f64> = grid.iter().map(|&t| penalized(t, rate.eval(t))).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| rate.eval(t)).collect();
        let n = grid.len();
        let mut suffix_gain = vec![n - 1; n];
        let mut suffix_rate = vec![n - 1; n];
        for j in (0..n - 1).rev() {
            let g = suffix_gain[j + 1];
            suffix_gain[j] = if gain[j] >= gain[g] { j } else { g };
            let r = suffix_rate[j + 1];
            suffix_rate[j] = if vals[j] <= vals[r] { j } else { r };
        }
        let extra = rate.breakpoints().into_iter().filter(|p| *p >= 0.0 && *p <= cap).collect();
        HcScan { rate, grid, step, cap, suffix_gain, suffix_rate, extra }
    }

    fn first_index_above(&self, c: f64) -> usize {
        self.grid.partition_point(|&t| t <= c)
    }

    /// `sup_{c < t <= cap} (t - I(t))`.
    fn gain_after(&self, c: f64) -> f64 {
        let gain = |t: f64| penalized(t, self.rate.eval(t));
        let mut best = f64::NEG_INFINITY;
        for k in 1..=12 {
            let t = c + 10f64.powi(-k) * c.abs().max(1.0);
            if t <= self.cap {
                best = best.max(gain(t));
            }
        }
        for &p in &self.extra {
            if p > c {
                best = best.max(gain(p));
            }
        }
        let j = self.first_index_above(c);
        if j < self.grid.len() {
            let k = self.suffix_gain[j];
            let a = (self.grid[k] - self.step).max(c + 1e-12 * c.abs().max(1.0));
            let b = (self.grid[k] + self.step).min(self.cap);
            best = best.max(gain(self.grid[k]));
            if a < b {
                best = best.max(golden_max(gain, a, b, T_TOL).1);
            }
        }
        best
    }

    /// `inf_{c <= t <= cap} I(t)`.
    fn rate_from(&self, c: f64) -> f64 {
        let neg = |t: f64| -self.rate.eval(t);
        let mut best = self.rate.eval(c);
        for &p in &self.extra {
            if p >= c {
                best = best.min(self.rate.eval(p));
            }
        }
        let j = self.first_index_above(c);
        if j < self.grid.len() {
            let k = self.suffix_rate[j];
            best = best.min(self.rate.eval(self.grid[k]));
            let a = (self.grid[k] - self.step).max(c);
            let b = (self.grid[k] + self.step).min(self.cap);
            if a < b {
                best = best.min(-golden_max(neg, a, b, T_TOL).1);
            }
        }
        best
    }

    fn outer(&self, c: f64) -> f64 {
        let g = self.gain_after(c);
        if g == f64::NEG_INFINITY {
            return g;
        }
        g + 0.5 * cap_one(self.rate_from(c))
    }
}

/// Lower bound on the boundary attained by the HC* test:
/// `1/2 + sup_{c >= 0} { sup_{t > c} (t - I(t)) + min(1, inf_{t >= c} I(t)) / 2 }`.
pub fn solve_beta_hc(rate: &RateFunction) -> f64 {
    let cap = search_cap(rate);
    if cap < 0.0 {
        return f64::NEG_INFINITY;
    }
    let scan = HcScan::new(rate, cap.max(1e-12));
    let h = |c: f64| scan.outer(c);
    let mut extra = scan.extra.clone();
    extra.extend(unit_level_crossings(rate, &scan.grid));
    // Where the inner supremum stops being attained to the right of c.
    let gain = |t: f64| penalized(t, rate.eval(t));
    extra.push(sup_on(&gain, 0.0, cap, false, &scan.extra).t);
    extra.push(0.0);
    0.5 + sup_on(&h, 0.0, cap, false, &extra).value
}

/// Sharp-bound checks need at most this step in the left derivative.
const DERIV_STEP: f64 = 1e-4;

/// `sup{t >= 0 : I'_-(t) <= level}`, `0` for an empty set.
fn derivative_level(rate: &RateFunction, level: f64) -> Result<f64> {
    let d = |t: f64| left_derivative(rate, t, DERIV_STEP);
    if d(0.0)? > level {
        return Ok(0.0);
    }
    let hi_dom = rate.domain_hi();
    let mut hi;
    if hi_dom.is_finite() {
        if hi_dom < 0.0 {
            return Ok(0.0);
        }
        if d(hi_dom)? <= level {
            return Ok(hi_dom);
        }
        hi = hi_dom;
    } else {
        hi = 1.0;
        while d(hi)? <= level {
            hi *= 2.0;
            if hi > 1e8 {
                return Ok(INF);
            }
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if d(mid)? <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `t0 = sup{t >= 0 : I'_-(t) <= 0}` and `t1 = sup{t >= 0 : I'_-(t) <= 1}`.
pub fn compute_t0_t1(rate: &RateFunction) -> Result<(f64, f64)> {
    if !rate.is_convex() {
        return Err(Error::Unsupported(format!(
            "t0/t1 of the non-convex rate '{}'",
            rate.family_tag()
        )));
    }
    Ok((derivative_level(rate, 0.0)?, derivative_level(rate, 1.0)?))
}

/// Whether the family behind a rate is known to satisfy the tail condition.
fn tail_condition_known(family_tag: &str) -> bool {
    matches!(
        family_tag,
        "idj"
            | "multivariate_gaussian"
            | "brownian_drift"
            | "heteroscedastic"
            | "mixture_of_mixtures_i"
            | "mixture_of_mixtures_ii"
            | "low_rank"
            | "correlated_pairs"
            | "sbm_pair"
            | "sbm_reduced"
            | "side_info"
            | "curie_weiss"
    )
}

fn one_sided_gap(rate: &RateFunction, at: f64, dir: f64) -> f64 {
    let v = rate.eval(at);
    let w = rate.eval(at + dir * 1e-14 * at.abs().max(1.0));
    if v == INF && w == INF {
        0.0
    } else {
        (v - w).abs()
    }
}

/// Evaluates every hypothesis needed for `beta_hc_lower = beta*`.
pub fn check_hc_optimality(rate: &RateFunction) -> Conditions {
    let (lo, hi) = crate::rate::convexity_range(rate);
    let violations = midpoint_violations(rate, lo, hi, 401);
    let convex = rate.is_convex() && violations == 0;
    let right_continuous_at_0 = one_sided_gap(rate, 0.0, 1.0) <= 1e-6;
    let mut endpoint_continuity = true;
    if rate.domain_lo().is_finite() && rate.eval(rate.domain_lo()).is_finite() {
        endpoint_continuity &= one_sided_gap(rate, rate.domain_lo(), 1.0) <= 1e-6;
    }
    if rate.domain_hi().is_finite() && rate.eval(rate.domain_hi()).is_finite() {
        endpoint_continuity &= one_sided_gap(rate, rate.domain_hi(), -1.0) <= 1e-6;
    }
    let report = solve_beta_star(rate);
    let exists_nonneg_tstar = report.beta_upper_sharp - 0.5 >= 0.0
        && sup_on(&|t| objective(rate, t), 0.0, search_cap(rate), false, &rate.breakpoints()).value
            >= -1e-12;
    let t0_t1_finite = convex
        && compute_t0_t1(rate).map(|(a, b)| a.is_finite() && b.is_finite()).unwrap_or(false);
    let tail = tail_condition_known(rate.family_tag());
    let agree = report.beta_star.is_some();
    let corollary = agree || (right_continuous_at_0 && exists_nonneg_tstar);
    Conditions {
        convex,
        convexity_violations: violations,
        right_continuous_at_0,
        endpoint_continuity,
        exists_nonneg_tstar,
        t0_t1_finite,
        tail_condition_checked: tail,
        sharp_bounds_agree: agree,
        hc_optimal: convex && endpoint_continuity && t0_t1_finite && tail && corollary,
    }
}

/// Full report: sharp bounds, HC bound, `t0`/`t1`, conditions and, when a
/// spec with a closed form is given, the closed-form boundary.
pub fn analyze(rate: &RateFunction, spec: Option<&ModelSpec>) -> BoundaryReport {
    let mut report = solve_beta_star(rate);
    report.beta_hc_lower = Some(solve_beta_hc(rate));
    if let Ok((t0, t1)) = compute_t0_t1(rate) {
        report.t0 = Some(t0);
        report.t1 = Some(t1);
    }
    report.conditions = check_hc_optimality(rate);
    report.closed_form = spec.and_then(|s| closed_form_beta(s).ok());
    if report.family_tag == "sparse_exponential" {
        report.warnings.push(
            "tail condition fails for this family; the boundary from its rate is known to be wrong"
                .to_string(),
        );
    }
    report
}

/// `1/2 + r` for `r <= 1/4`, else `1 - (1 - sqrt r)_+^2`.
fn idj_beta(r: f64) -> f64 {
    if r <= 0.25 {
        0.5 + r
    } else {
        let d = (1.0 - r.sqrt()).max(0.0);
        1.0 - d * d
    }
}

/// The closed-form boundary of a model family.
///
/// For the sparse exponential family this is the true boundary
/// `(1 + min(1, r)) / 2`, not the one its naive rate produces.
pub fn closed_form_beta(spec: &ModelSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec {
        ModelSpec::Idj { r } | ModelSpec::BrownianDrift { r, .. } | ModelSpec::MixtureOfMixturesI { r, .. } => {
            idj_beta(*r)
        }
        ModelSpec::MultivariateGaussian { r, u, sigma } => {
            idj_beta(r * crate::rate::catalog::signal_energy(u, sigma))
        }
        ModelSpec::Heteroscedastic { r, sigma2 } => {
            if 2.0 * r.sqrt() + sigma2 <= 2.0 {
                0.5 + r / (2.0 - sigma2)
            } else {
                let d = (1.0 - r.sqrt()).max(0.0);
                1.0 - d * d / sigma2
            }
        }
        ModelSpec::MixtureOfMixturesII { r, .. } => {
            if *r <= 0.2 {
                1.5 * r + 0.5
            } else {
                let d = (1.0 - 2.0 * r).max(0.0);
                (1.0 - d * d).sqrt()
            }
        }
        ModelSpec::LowRank { r, .. } => {
            if *r <= 1.0 {
                0.5
            } else {
                1.0 - 1.0 / (1.0 + r)
            }
        }
        ModelSpec::CorrelatedPairs { r, rho } => {
            if 2.0 * r.sqrt() + rho <= 1.0 {
                0.5 + r / (1.0 - rho)
            } else {
                let d = (1.0 - r.sqrt()).max(0.0);
                1.0 - d * d / (1.0 + rho)
            }
        }
        ModelSpec::SbmPair { r } | ModelSpec::SbmReduced { r } | ModelSpec::SparseExponential { r } => {
            0.5 * (1.0 + r.min(1.0))
        }
        ModelSpec::SideInfo { r, rho } => {
            if *rho > (1.0 - r) / 4.0 {
                let d = ((1.0 - r).max(0.0).sqrt() - rho.sqrt()).max(0.0);
                1.0 - d * d
            } else {
                0.5 + rho + 0.5 * r
            }
        }
        ModelSpec::CurieWeiss { .. } => return Err(Error::NoClosedForm("curie_weiss".to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::analytic_rate;

    fn idj(r: f64) -> RateFunction {
        analytic_rate(&ModelSpec::Idj { r }).unwrap()
    }

    #[test]
    fn objective_values() {
        assert!((objective(&idj(0.25), 0.0) + 0.03125).abs() < 1e-15);
        assert!((objective(&idj(0.25), 0.25) - 0.125).abs() < 1e-15);
        let low = analytic_rate(&ModelSpec::LowRank { r: 2.0, k: 1, q: vec![vec![1.0, 0.0], vec![0.0, 1.0]] }).unwrap();
        assert_eq!(objective(&low, -1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn idj_boundaries() {
        let rep = solve_beta_star(&idj(0.25));
        assert!((rep.beta_star.unwrap() - 0.75).abs() < 1e-9);
        let rep = solve_beta_star(&idj(0.5));
        let want = 1.0 - (1.0 - 0.5f64.sqrt()).powi(2);
        assert!((rep.beta_star.unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn hc_bound_matches_for_idj() {
        assert!((solve_beta_hc(&idj(0.25)) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn t0_t1_for_parabola() {
        let r = RateFunction::parabola(0.0, 1.0).unwrap();
        let (t0, t1) = compute_t0_t1(&r).unwrap();
        assert_eq!(t0, 0.0);
        assert!((t1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn point_mass_at_zero_has_no_lower_sharp_bound() {
        let rep = solve_beta_star(&RateFunction::point_mass(0.0).unwrap());
        assert_eq!(rep.beta_upper_sharp, 0.5);
        assert_eq!(rep.beta_lower_sharp, f64::NEG_INFINITY);
        assert!(rep.beta_star.is_none());
    }

    #[test]
    fn curie_weiss_has_no_closed_form() {
        let err = closed_form_beta(&ModelSpec::CurieWeiss { theta: 0.5, mu: 0.5 }).unwrap_err();
        assert!(matches!(err, Error::NoClosedForm(_)));
    }

    #[test]
    fn report_serializes_infinities() {
        let rep = solve_beta_star(&RateFunction::point_mass(0.0).unwrap());
        let text = serde_json::to_string(&rep).unwrap();
        assert!(text.contains("\"beta_lower_sharp\":\"-inf\""));
        let back: BoundaryReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.beta_lower_sharp, f64::NEG_INFINITY);
    }
}
