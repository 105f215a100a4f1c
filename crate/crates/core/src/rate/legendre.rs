use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use super::{GridConfig, RateForm, RateFunction};
use crate::error::{invalid, Error, Result};
use crate::extended::INF;
use crate::numeric::golden_max;

type CgfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A limiting cumulant generating function `Lambda(lambda)`.
///
/// Values may be `+inf` (outside the effective domain) but never `-inf`.
#[derive(Clone)]
pub struct LimitCgf {
    f: CgfFn,
    domain_lo: f64,
    domain_hi: f64,
    origin_interior: bool,
}

impl fmt::Debug for LimitCgf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitCgf")
            .field("domain_lo", &self.domain_lo)
            .field("domain_hi", &self.domain_hi)
            .field("origin_interior", &self.origin_interior)
            .finish()
    }
}

impl LimitCgf {
    /// Wraps `f` with effective domain `[lo, hi]`.
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lo: f64, hi: f64) -> Self {
        let f: CgfFn = Arc::new(f);
        let eps: f64 = 1e-6;
        let origin_interior =
            lo < 0.0 && hi > 0.0 && f(-eps.min(-lo / 2.0)).is_finite() && f(eps.min(hi / 2.0)).is_finite();
        LimitCgf { f, domain_lo: lo, domain_hi: hi, origin_interior }
    }

    /// `r (lambda^2 - lambda)`, the Gaussian location family limit.
    pub fn gaussian(r: f64) -> Self {
        LimitCgf::new(move |l| r * (l * l - l), -INF, INF)
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        if lambda < self.domain_lo || lambda > self.domain_hi {
            INF
        } else {
            (self.f)(lambda)
        }
    }

    pub fn effective_domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn origin_interior(&self) -> bool {
        self.origin_interior
    }
}

/// Largest `|lambda|` explored before the inner supremum is declared unbounded.
const LAMBDA_CAP: f64 = 1e12;

/// `sup_lambda { lambda t - Lambda(lambda) }` at a single `t`.
///
/// The concave inner problem is bracketed by step doubling away from the
/// origin and refined by golden-section search to width `1e-10`. An
/// objective still increasing at `|lambda| = 1e12` is reported as `+inf`.
pub fn conjugate_at(cgf: &LimitCgf, t: f64) -> Result<f64> {
    let g = |l: f64| -> Result<f64> {
        let v = cgf.eval(l);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::MalformedCgf(format!("Lambda({l}) = {v}")));
        }
        Ok(if v == INF { f64::NEG_INFINITY } else { l * t - v })
    };
    let g0 = g(0.0)?;
    let step0 = 1e-3;
    let gp = g(step0)?;
    let gm = g(-step0)?;
    let sign = if gp > g0 {
        1.0
    } else if gm > g0 {
        -1.0
    } else {
        let (_, v) = golden_max(|l| g(l).unwrap_or(f64::NEG_INFINITY), -step0, step0, 1e-10);
        return Ok(v.max(g0));
    };
    let edge = if sign > 0.0 { cgf.domain_hi } else { -cgf.domain_lo };
    let (mut prev, mut cur, mut gcur) = (0.0, step0, if sign > 0.0 { gp } else { gm });
    let mut step = step0;
    loop {
        step *= 2.0;
        let mut next = cur + step;
        if next >= edge {
            next = edge;
        }
        if next > LAMBDA_CAP {
            return Ok(INF);
        }
        let gnext = g(sign * next)?;
        if gnext > gcur && next < edge {
            prev = cur;
            cur = next;
            gcur = gnext;
            continue;
        }
        if gnext > gcur && next >= edge {
            // Maximum on the domain boundary.
            prev = cur;
        }
        let (a, b) = (sign * prev, sign * next);
        let tol = 1e-10 * (1.0 + next.abs());
        let (_, v) = golden_max(|l| g(l).unwrap_or(f64::NEG_INFINITY), a, b, tol);
        return Ok(v.max(gcur).max(g0));
    }
}

/// Numeric Legendre–Fenchel transform of `cgf` on the points of `grid`.
///
/// The result is tabulated on the grid and linearly interpolated between
/// grid points. It is flagged convex.
pub fn legendre_transform(cgf: &LimitCgf, grid: &GridConfig) -> Result<RateFunction> {
    grid.validate()?;
    if !cgf.origin_interior() {
        return Err(invalid("cgf", "0 must be an interior point of the effective domain"));
    }
    let pts = grid.points();
    let mut values = Vec::with_capacity(pts.len());
    for &t in &pts {
        let v = conjugate_at(cgf, t)?;
        values.push(if v.is_finite() { Some(v.max(0.0)) } else { None });
    }
    let mut rate = RateFunction::new("legendre", RateForm::Tabulated { t: pts, values })?;
    rate.is_convex = true;
    Ok(rate)
}

/// Finite-`n` CGF of an exponential family in natural parametrization:
/// `[l log c(theta_n) + (1 - l) log c(theta) - log c(l (theta_n - theta) + theta)] / log n`.
///
/// `log_c` must return `-inf` outside the natural parameter space; the CGF
/// is then `+inf` at that `lambda`.
pub fn exponential_family_cgf(
    log_c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    theta_null: &[f64],
    theta_n: &[f64],
    n: f64,
) -> Result<LimitCgf> {
    if !(n >= 3.0) {
        return Err(invalid("n", "must be at least 3"));
    }
    if theta_null.len() != theta_n.len() {
        return Err(Error::DimensionMismatch { expected: theta_null.len(), got: theta_n.len() });
    }
    let th0 = theta_null.to_vec();
    let th1 = theta_n.to_vec();
    let lc0 = log_c(&th0);
    let lc1 = log_c(&th1);
    if !lc0.is_finite() || !lc1.is_finite() {
        return Err(invalid("theta", "log c must be finite at both parameters"));
    }
    let log_n = n.ln();
    let f = move |l: f64| {
        let mid: Vec<f64> = th0.iter().zip(&th1).map(|(a, b)| l * (b - a) + a).collect();
        let lm = log_c(&mid);
        if lm == f64::NEG_INFINITY || lm.is_nan() {
            return INF;
        }
        (l * lc1 + (1.0 - l) * lc0 - lm) / log_n
    };
    Ok(LimitCgf::new(f, -INF, INF))
}

/// Cauchy-gap check of the finite-`n` CGF at `n`, `10 n` and `100 n`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceProbe {
    pub n: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// `values[i][j]` is the CGF at `n[i]`, `lambdas[j]`.
    pub values: Vec<Vec<f64>>,
    /// Largest difference between consecutive `n` over all `lambdas`.
    pub cauchy_gap: f64,
}

pub fn cgf_convergence_probe(
    log_c: impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static,
    theta_null: &[f64],
    theta_of_n: impl Fn(f64) -> Vec<f64>,
    n: f64,
    lambdas: &[f64],
) -> Result<ConvergenceProbe> {
    let ns = vec![n, 10.0 * n, 100.0 * n];
    let mut values = Vec::new();
    for &m in &ns {
        let cgf = exponential_family_cgf(log_c.clone(), theta_null, &theta_of_n(m), m)?;
        values.push(lambdas.iter().map(|&l| cgf.eval(l)).collect::<Vec<_>>());
    }
    let mut gap: f64 = 0.0;
    for w in values.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            if a.is_finite() && b.is_finite() {
                gap = gap.max((a - b).abs());
            } else if a != b {
                gap = INF;
            }
        }
    }
    Ok(ConvergenceProbe { n: ns, lambdas: lambdas.to_vec(), values, cauchy_gap: gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_conjugate_at_one() {
        let v = conjugate_at(&LimitCgf::gaussian(1.0), 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_cgf_gives_point_mass() {
        let c = 0.7;
        let cgf = LimitCgf::new(move |l| c * l, -INF, INF);
        assert!(conjugate_at(&cgf, c).unwrap().abs() < 1e-15);
        assert_eq!(conjugate_at(&cgf, c + 0.1).unwrap(), INF);
        assert_eq!(conjugate_at(&cgf, c - 0.1).unwrap(), INF);
    }

    #[test]
    fn scaled_gaussian_cgf_has_scaled_rate() {
        // Lambda = r c (l^2 - l) is the Gaussian CGF at r c; its conjugate
        // at t is (t + r c)^2 / (4 r c).
        let (r, c) = (0.5, 2.0);
        let cgf = LimitCgf::new(move |l| r * c * (l * l - l), -INF, INF);
        let v = conjugate_at(&cgf, 0.0).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bounded_domain_maximum_on_edge() {
        // Lambda = l^2 on [-1, 1]: for t = 4 the sup is at l = 1, value 3.
        let cgf = LimitCgf::new(|l| l * l, -1.0, 1.0);
        let v = conjugate_at(&cgf, 4.0).unwrap();
        assert!((v - 3.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn negative_infinity_is_malformed() {
        let cgf = LimitCgf::new(|l| if l > 0.5 { f64::NEG_INFINITY } else { l * l }, -INF, INF);
        assert!(matches!(conjugate_at(&cgf, 3.0), Err(Error::MalformedCgf(_))));
    }

    #[test]
    fn exponential_family_gaussian_is_exact() {
        let r = 0.3;
        for n in [10.0, 1e4, 1e9] {
            let th = (2.0 * r * f64::ln(n)).sqrt();
            let cgf = exponential_family_cgf(|t: &[f64]| -0.5 * t[0] * t[0], &[0.0], &[th], n).unwrap();
            for l in [-1.0, 0.0, 0.4, 1.0, 2.5] {
                assert!((cgf.eval(l) - r * (l * l - l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probe_reports_zero_gap_for_gaussian() {
        let r = 0.3;
        let probe = cgf_convergence_probe(
            |t: &[f64]| -0.5 * t[0] * t[0],
            &[0.0],
            |n| vec![(2.0 * r * n.ln()).sqrt()],
            100.0,
            &[-1.0, 0.5, 2.0],
        )
        .unwrap();
        assert!(probe.cauchy_gap < 1e-12);
    }

    #[test]
    fn outside_natural_domain_is_infinite() {
        // Exponential-distribution family: log c(theta) = log(-theta), theta < 0.
        let log_c = |t: &[f64]| if t[0] < 0.0 { (-t[0]).ln() } else { f64::NEG_INFINITY };
        let cgf = exponential_family_cgf(log_c, &[-1.0], &[-0.5], 100.0).unwrap();
        assert_eq!(cgf.eval(3.0), INF);
        assert!(cgf.eval(0.0).abs() < 1e-15);
    }
}
