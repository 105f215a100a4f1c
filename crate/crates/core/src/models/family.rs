use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::curie_weiss::{curie_weiss_magnetization_law, spins_for, MagnetizationLaw};
use super::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::extended::INF;
use crate::numeric::{integrate_pieces, log_add_exp, log_cosh, norm_cdf, norm_log_pdf, norm_sf, Integral};

/// How a null tail probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Exact,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProbability {
    pub value: f64,
    pub method: TailMethod,
    /// Standard error for Monte Carlo values, quadrature error otherwise.
    pub error: f64,
}

impl TailProbability {
    fn exact(value: f64) -> Self {
        TailProbability { value: value.clamp(0.0, 1.0), method: TailMethod::Exact, error: 0.0 }
    }

    fn quadrature(i: Integral) -> Self {
        TailProbability { value: i.value.clamp(0.0, 1.0), method: TailMethod::Quadrature, error: i.error }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    /// Log-LR is `slope * s - offset` in a standard normal score `s`.
    Linear { slope: f64, offset: f64 },
    Multivariate { mu: f64, chol: DMatrix<f64>, whitened_dir: DVector<f64>, u: Vec<f64>, energy: f64 },
    Brownian { mu: f64, fprime: Vec<f64> },
    Heteroscedastic { mu: f64, sigma: f64, sigma2: f64 },
    MixtureI { mu: f64, u1: Vec<f64>, u2: Vec<f64>, overlap: f64 },
    MixtureII { m: f64, u: Vec<f64>, v: Vec<f64> },
    LowRank { r: f64, k: usize, basis: Vec<Vec<f64>>, p: usize },
    Pairs { mu: f64, rho: f64 },
    Sbm { p: f64, q: f64, reduced: bool },
    SideInfo { p: f64, mu: f64, log_odds: f64 },
    CurieWeiss { theta: f64, mu: f64, null: MagnetizationLaw, alt: MagnetizationLaw },
    SparseExponential { log_scale: f64, frac: f64 },
}

/// A model family at a fixed sample size `n`.
///
/// Holds everything that depends on `n` once, so drawing and evaluating the
/// log-likelihood ratio stay cheap inside Monte Carlo loops.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    n: f64,
    prep: Prepared,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard normal integration range and break points.
const GAUSS_PIECES: [f64; 9] = [-12.0, -8.0, -5.0, -2.5, 0.0, 2.5, 5.0, 8.0, 12.0];

impl Model {
    pub fn new(spec: &ModelSpec, n: f64) -> Result<Self> {
        spec.validate()?;
        if !(n.is_finite() && n >= 3.0) {
            return Err(invalid("n", format!("must be at least 3, got {n}")));
        }
        let log_n = n.ln();
        let calib = |r: f64| (2.0 * r * log_n).sqrt();
        let prep = match spec {
            ModelSpec::Idj { r } => {
                let mu = calib(*r);
                Prepared::Linear { slope: mu, offset: 0.5 * mu * mu }
            }
            ModelSpec::MultivariateGaussian { r, u, sigma } => {
                let d = u.len();
                let m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
                let chol = nalgebra::Cholesky::new(m).ok_or_else(|| invalid("sigma", "must be positive definite"))?;
                let uv = DVector::from_column_slice(u);
                let w = chol.solve(&uv);
                let energy = uv.dot(&w);
                Prepared::Multivariate { mu: calib(*r), chol: chol.l(), whitened_dir: w, u: u.clone(), energy }
            }
            ModelSpec::BrownianDrift { r, fprime } => Prepared::Brownian { mu: calib(*r), fprime: fprime.clone() },
            ModelSpec::Heteroscedastic { r, sigma2 } => {
                Prepared::Heteroscedastic { mu: calib(*r), sigma: sigma2.sqrt(), sigma2: *sigma2 }
            }
            ModelSpec::MixtureOfMixturesI { r, u1, u2 } => {
                Prepared::MixtureI { mu: calib(*r), u1: u1.clone(), u2: u2.clone(), overlap: dot(u1, u2) }
            }
            ModelSpec::MixtureOfMixturesII { r, u, v } => Prepared::MixtureII { m: calib(*r), u: u.clone(), v: v.clone() },
            ModelSpec::LowRank { r, k, q } => {
                let p = q.len();
                let basis = (0..*k).map(|j| (0..p).map(|i| q[i][j]).collect()).collect();
                Prepared::LowRank { r: *r, k: *k, basis, p }
            }
            ModelSpec::CorrelatedPairs { r, rho } => Prepared::Pairs { mu: (r * log_n).sqrt(), rho: *rho },
            ModelSpec::SbmPair { r } | ModelSpec::SbmReduced { r } => {
                let nr = n.powf(*r);
                Prepared::Sbm {
                    p: nr / (1.0 + nr),
                    q: 1.0 / (1.0 + nr),
                    reduced: matches!(spec, ModelSpec::SbmReduced { .. }),
                }
            }
            ModelSpec::SideInfo { r, rho } => {
                let nr = n.powf(*r);
                Prepared::SideInfo { p: nr / (1.0 + nr), mu: calib(*rho), log_odds: r * log_n }
            }
            ModelSpec::CurieWeiss { theta, mu } => {
                let spins = spins_for(n);
                Prepared::CurieWeiss {
                    theta: *theta,
                    mu: *mu,
                    null: curie_weiss_magnetization_law(*theta, 0.0, spins)?,
                    alt: curie_weiss_magnetization_law(*theta, *mu, spins)?,
                }
            }
            ModelSpec::SparseExponential { r } => {
                let nr = n.powf(*r);
                Prepared::SparseExponential { log_scale: nr.ln_1p(), frac: nr / (1.0 + nr) }
            }
        };
        Ok(Model { spec: spec.clone(), n, prep })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    /// Number of values per stored observation.
    pub fn dim(&self) -> usize {
        match &self.prep {
            Prepared::Linear { .. }
            | Prepared::Brownian { .. }
            | Prepared::Heteroscedastic { .. }
            | Prepared::CurieWeiss { .. }
            | Prepared::SparseExponential { .. } => 1,
            Prepared::Multivariate { u, .. } => u.len(),
            Prepared::MixtureI { u1, .. } => u1.len(),
            Prepared::MixtureII { u, .. } => u.len(),
            Prepared::LowRank { p, .. } => *p,
            Prepared::Pairs { .. } | Prepared::SideInfo { .. } => 2,
            Prepared::Sbm { reduced, .. } => {
                if *reduced {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// CSV column names for one observation.
    pub fn columns(&self) -> Vec<String> {
        let numbered = |d: usize| (1..=d).map(|i| format!("x{i}")).collect();
        match &self.prep {
            Prepared::Linear { .. } | Prepared::Heteroscedastic { .. } | Prepared::SparseExponential { .. } => {
                vec!["x".into()]
            }
            Prepared::Brownian { .. } => vec!["integral_fprime_dx".into()],
            Prepared::CurieWeiss { .. } => vec!["magnetization".into()],
            Prepared::Sbm { reduced: true, .. } => vec!["u".into()],
            Prepared::Sbm { reduced: false, .. } => vec!["a".into(), "b".into()],
            Prepared::SideInfo { .. } => vec!["a".into(), "w".into()],
            _ => numbered(self.dim()),
        }
    }

    /// Draws one observation into `out`, from the null or the signal law.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, signal: bool, out: &mut [f64]) {
        match &self.prep {
            Prepared::Linear { slope, .. } => {
                out[0] = normal(rng) + if signal { *slope } else { 0.0 };
            }
            Prepared::Multivariate { mu, chol, u, .. } => {
                let z = DVector::from_fn(u.len(), |_, _| normal(rng));
                let x = chol * z;
                for i in 0..u.len() {
                    out[i] = x[i] + if signal { mu * u[i] } else { 0.0 };
                }
            }
            Prepared::Brownian { mu, fprime } => {
                let m = fprime.len() as f64;
                let sd = m.sqrt().recip();
                let mut s = 0.0;
                for f in fprime {
                    let mut dx = sd * normal(rng);
                    if signal {
                        dx += mu * f / m;
                    }
                    s += f * dx;
                }
                out[0] = s;
            }
            Prepared::Heteroscedastic { mu, sigma, .. } => {
                let z = normal(rng);
                out[0] = if signal { mu + sigma * z } else { z };
            }
            Prepared::MixtureI { mu, u1, u2, .. } => {
                let center = if rng.random::<bool>() { u1 } else { u2 };
                for i in 0..u1.len() {
                    out[i] = normal(rng) + if signal { mu * center[i] } else { 0.0 };
                }
            }
            Prepared::MixtureII { m, u, v } => {
                let dir = if signal { v } else { u };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for i in 0..u.len() {
                    out[i] = normal(rng) + sign * m * dir[i];
                }
            }
            Prepared::LowRank { r, basis, p, .. } => {
                let z: Vec<f64> = (0..*p).map(|_| normal(rng)).collect();
                out[..*p].copy_from_slice(&z);
                if signal {
                    let stretch = (1.0 + r).sqrt() - 1.0;
                    for b in basis {
                        let c = stretch * dot(b, &z);
                        for i in 0..*p {
                            out[i] += c * b[i];
                        }
                    }
                }
            }
            Prepared::Pairs { mu, rho } => {
                let (a, b) = (normal(rng), normal(rng));
                if signal {
                    out[0] = mu + a;
                    out[1] = mu + rho * a + (1.0 - rho * rho).sqrt() * b;
                } else {
                    out[0] = a;
                    out[1] = b;
                }
            }
            Prepared::Sbm { p, q, reduced } => {
                // Null: both edges share one probability; signal: they differ.
                let (first, second) = if rng.random::<bool>() {
                    (*p, if signal { *q } else { *p })
                } else {
                    (*q, if signal { *p } else { *q })
                };
                let a = (rng.random::<f64>() < first) as u8 as f64;
                let b = (rng.random::<f64>() < second) as u8 as f64;
                if *reduced {
                    out[0] = ((a + b) as u8 % 2) as f64;
                } else {
                    out[0] = a;
                    out[1] = b;
                }
            }
            Prepared::SideInfo { p, mu, .. } => {
                let hit = if signal { *p } else { 1.0 - p };
                out[0] = (rng.random::<f64>() < hit) as u8 as f64;
                out[1] = normal(rng) + if signal { *mu } else { 0.0 };
            }
            Prepared::CurieWeiss { null, alt, .. } => {
                let law = if signal { alt } else { null };
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut s = *law.sums.last().unwrap();
                for (k, p) in law.sums.iter().zip(&law.pmf) {
                    acc += p;
                    if u < acc {
                        s = *k;
                        break;
                    }
                }
                out[0] = s as f64;
            }
            Prepared::SparseExponential { log_scale, .. } => {
                let e = -(1.0 - rng.random::<f64>()).ln();
                out[0] = if signal { e * log_scale.exp() } else { e };
            }
        }
    }

    /// `log(q_n / p_n)` at one observation.
    pub fn log_lr(&self, obs: &[f64]) -> Result<f64> {
        if obs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: obs.len() });
        }
        Ok(self.log_lr_unchecked(obs))
    }

    pub(crate) fn log_lr_unchecked(&self, obs: &[f64]) -> f64 {
        match &self.prep {
            Prepared::Linear { slope, offset } => slope * obs[0] - offset,
            Prepared::Multivariate { mu, whitened_dir, energy, .. } => {
                mu * dot(obs, whitened_dir.as_slice()) - 0.5 * mu * mu * energy
            }
            Prepared::Brownian { mu, .. } => mu * obs[0] - 0.5 * mu * mu,
            Prepared::Heteroscedastic { mu, sigma2, .. } => {
                let x = obs[0];
                -0.5 * sigma2.ln() - (x - mu) * (x - mu) / (2.0 * sigma2) + 0.5 * x * x
            }
            Prepared::MixtureI { mu, u1, u2, .. } => {
                -0.5 * mu * mu - std::f64::consts::LN_2 + log_add_exp(mu * dot(obs, u1), mu * dot(obs, u2))
            }
            Prepared::MixtureII { m, u, v } => log_cosh(m * dot(obs, v)) - log_cosh(m * dot(obs, u)),
            Prepared::LowRank { r, k, basis, .. } => {
                let q: f64 = basis.iter().map(|b| dot(b, obs).powi(2)).sum();
                -0.5 * *k as f64 * r.ln_1p() + 0.5 * r / (1.0 + r) * q
            }
            Prepared::Pairs { mu, rho } => {
                let z1 = (obs[0] + obs[1]) / std::f64::consts::SQRT_2;
                let z2 = (obs[0] - obs[1]) / std::f64::consts::SQRT_2;
                pairs_llr(*mu, *rho, z1, z2)
            }
            Prepared::Sbm { p, q, reduced } => {
                let differ = if *reduced { obs[0] != 0.0 } else { obs[0] != obs[1] };
                sbm_llr(*p, *q, differ)
            }
            Prepared::SideInfo { mu, log_odds, .. } => {
                (2.0 * obs[0] - 1.0) * log_odds + mu * obs[1] - 0.5 * mu * mu
            }
            Prepared::CurieWeiss { theta, mu, null, alt } => {
                null.log_partition - alt.log_partition + theta * mu * obs[0]
            }
            Prepared::SparseExponential { log_scale, frac } => -log_scale + obs[0] * frac,
        }
    }

    /// A standard-normal score `s` with the log-LR increasing in `s`, for
    /// families whose null reduces to one Gaussian coordinate.
    pub fn gaussian_score(&self, obs: &[f64]) -> Option<f64> {
        match &self.prep {
            Prepared::Linear { .. } | Prepared::Brownian { .. } => Some(obs[0]),
            Prepared::Multivariate { whitened_dir, energy, .. } => {
                Some(dot(obs, whitened_dir.as_slice()) / energy.sqrt())
            }
            _ => None,
        }
    }

    /// The log-LR as a function of a standard normal score, when one exists.
    fn score_llr(&self) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
        match &self.prep {
            Prepared::Linear { slope, offset } => Some(Box::new(move |s| slope * s - offset)),
            Prepared::Brownian { mu, .. } => Some(Box::new(move |s| mu * s - 0.5 * mu * mu)),
            Prepared::Multivariate { mu, energy, .. } => {
                let a = mu * energy.sqrt();
                Some(Box::new(move |s| a * s - 0.5 * a * a))
            }
            Prepared::Heteroscedastic { .. } => Some(Box::new(move |s| self.log_lr_unchecked(&[s]))),
            _ => None,
        }
    }

    /// `P(log L > ell)` under the null.
    pub fn null_log_tail(&self, ell: f64) -> TailProbability {
        if ell.is_nan() {
            return TailProbability::exact(f64::NAN);
        }
        if ell == f64::NEG_INFINITY {
            return TailProbability::exact(1.0);
        }
        if ell == INF {
            return TailProbability::exact(0.0);
        }
        match &self.prep {
            Prepared::Linear { slope, offset } => TailProbability::exact(norm_sf((ell + offset) / slope)),
            Prepared::Brownian { mu, .. } => TailProbability::exact(norm_sf((ell + 0.5 * mu * mu) / mu)),
            Prepared::Multivariate { mu, energy, .. } => {
                let a = mu * energy.sqrt();
                TailProbability::exact(norm_sf((ell + 0.5 * a * a) / a))
            }
            Prepared::Heteroscedastic { mu, sigma2, .. } => TailProbability::exact(hetero_tail(*mu, *sigma2, ell)),
            Prepared::LowRank { r, k, .. } => {
                let thr = 2.0 * (1.0 + r) / r * (ell + 0.5 * *k as f64 * r.ln_1p());
                TailProbability::exact(chi2_sf(*k, thr))
            }
            Prepared::Sbm { p, q, .. } => {
                let (agree, differ) = (sbm_llr(*p, *q, false) > ell, sbm_llr(*p, *q, true) > ell);
                TailProbability::exact(match (agree, differ) {
                    (true, true) => 1.0,
                    (true, false) => p * p + q * q,
                    (false, true) => 2.0 * p * q,
                    (false, false) => 0.0,
                })
            }
            Prepared::SideInfo { p, mu, log_odds } => {
                let at = |a: f64| norm_sf((ell - (2.0 * a - 1.0) * log_odds + 0.5 * mu * mu) / mu);
                TailProbability::exact((1.0 - p) * at(1.0) + p * at(0.0))
            }
            Prepared::CurieWeiss { null, .. } => {
                let tail = null
                    .sums
                    .iter()
                    .zip(&null.pmf)
                    .filter(|(&s, _)| self.log_lr_unchecked(&[s as f64]) > ell)
                    .map(|(_, p)| p)
                    .sum();
                TailProbability::exact(tail)
            }
            Prepared::SparseExponential { log_scale, frac } => {
                let x = (ell + log_scale) / frac;
                TailProbability::exact(if x <= 0.0 { 1.0 } else { (-x).exp() })
            }
            Prepared::Pairs { mu, rho } => TailProbability::quadrature(pairs_tail(*mu, *rho, ell)),
            Prepared::MixtureI { mu, overlap, .. } => TailProbability::quadrature(mixture_i_tail(*mu, *overlap, ell)),
            Prepared::MixtureII { m, .. } => TailProbability::quadrature(mixture_ii_tail(*m, ell)),
        }
    }

    /// `E_null[g(log L)]` by exact sums or quadrature over the null law.
    pub fn null_expectation(&self, g: &dyn Fn(f64) -> f64, tol: f64) -> Integral {
        if let Some(llr) = self.score_llr() {
            let f = |s: f64| norm_log_pdf(s).exp() * g(llr(s));
            return integrate_pieces(&f, &GAUSS_PIECES, tol);
        }
        let exact = |value: f64| Integral { value, error: 0.0, evaluations: 0 };
        match &self.prep {
            Prepared::Sbm { p, q, .. } => {
                exact((p * p + q * q) * g(sbm_llr(*p, *q, false)) + 2.0 * p * q * g(sbm_llr(*p, *q, true)))
            }
            Prepared::CurieWeiss { null, .. } => exact(
                null.sums.iter().zip(&null.pmf).map(|(&s, p)| p * g(self.log_lr_unchecked(&[s as f64]))).sum(),
            ),
            Prepared::SideInfo { p, .. } => {
                let part = |a: f64| {
                    let f = |w: f64| norm_log_pdf(w).exp() * g(self.log_lr_unchecked(&[a, w]));
                    integrate_pieces(&f, &GAUSS_PIECES, tol / 2.0)
                };
                let (one, zero) = (part(1.0), part(0.0));
                Integral {
                    value: (1.0 - p) * one.value + p * zero.value,
                    error: one.error + zero.error,
                    evaluations: one.evaluations + zero.evaluations,
                }
            }
            Prepared::SparseExponential { log_scale, .. } => {
                let f = |x: f64| (-x).exp() * g(self.log_lr_unchecked(&[x]));
                // g may grow like exp(x (1 - 1 / scale)); cover the signal scale too.
                let scale = log_scale.exp();
                let mut points = vec![0.0, 1.0, 4.0, 10.0, 20.0, 40.0, 80.0];
                points.extend([80.0 * scale.sqrt(), 80.0 * scale].into_iter().filter(|&x| x > 80.0));
                integrate_pieces(&f, &points, tol)
            }
            Prepared::LowRank { r, k, .. } => {
                // Integrate over the chi radius s = sqrt(Q).
                let kf = *k as f64;
                let log_norm = (1.0 - 0.5 * kf) * std::f64::consts::LN_2 - statrs::function::gamma::ln_gamma(0.5 * kf);
                let f = |s: f64| {
                    if s <= 0.0 {
                        return if *k == 1 { (log_norm).exp() * g(-0.5 * r.ln_1p()) } else { 0.0 };
                    }
                    let dens = (log_norm + (kf - 1.0) * s.ln() - 0.5 * s * s).exp();
                    dens * g(-0.5 * kf * r.ln_1p() + 0.5 * r / (1.0 + r) * s * s)
                };
                let top = kf.sqrt() + 14.0;
                integrate_pieces(&f, &[0.0, 1.0, kf.sqrt(), kf.sqrt() + 4.0, top], tol)
            }
            Prepared::Pairs { mu, rho } => {
                nested_gauss(&|z1, z2| g(pairs_llr(*mu, *rho, z1, z2)), tol)
            }
            Prepared::MixtureI { mu, overlap, .. } => {
                let c = *overlap;
                let sd = (1.0 - c * c).sqrt();
                nested_gauss(
                    &|y1, e| {
                        let y2 = c * y1 + sd * e;
                        g(-0.5 * mu * mu - std::f64::consts::LN_2 + log_add_exp(mu * y1, mu * y2))
                    },
                    tol,
                )
            }
            Prepared::MixtureII { m, .. } => {
                // By symmetry the coordinate along u can be taken from N(m, 1).
                nested_gauss(&|yu, yv| g(log_cosh(m * yv) - log_cosh(m * (yu + m))), tol)
            }
            _ => unreachable!("score families handled above"),
        }
    }

    /// `log E_null[L^gamma]`, `+inf` when the moment diverges.
    pub fn log_moment(&self, gamma: f64) -> f64 {
        // E[exp(a s^2 + b s + c)] for s ~ N(0, 1).
        let gauss_quad = |a: f64, b: f64, c: f64| {
            if 1.0 - 2.0 * a <= 0.0 {
                INF
            } else {
                c + b * b / (2.0 * (1.0 - 2.0 * a)) - 0.5 * (1.0 - 2.0 * a).ln()
            }
        };
        match &self.prep {
            Prepared::Linear { slope, offset } => gauss_quad(0.0, gamma * slope, -gamma * offset),
            Prepared::Brownian { mu, .. } => gauss_quad(0.0, gamma * mu, -0.5 * gamma * mu * mu),
            Prepared::Multivariate { mu, energy, .. } => {
                let a = mu * energy.sqrt();
                gauss_quad(0.0, gamma * a, -0.5 * gamma * a * a)
            }
            Prepared::Heteroscedastic { mu, sigma2, .. } => {
                let a = 0.5 * (1.0 - 1.0 / sigma2);
                let b = mu / sigma2;
                let c = -0.5 * sigma2.ln() - mu * mu / (2.0 * sigma2);
                gauss_quad(gamma * a, gamma * b, gamma * c)
            }
            Prepared::LowRank { r, k, .. } => {
                let s = r / (1.0 + r);
                if gamma * s >= 1.0 {
                    INF
                } else {
                    let kf = *k as f64;
                    -0.5 * gamma * kf * r.ln_1p() - 0.5 * kf * (1.0 - gamma * s).ln()
                }
            }
            Prepared::Pairs { mu, rho } => {
                let a = std::f64::consts::SQRT_2 * mu;
                let c0 = -0.5 * (1.0 - rho * rho).ln();
                let first = gauss_quad(
                    gamma * (0.5 - 0.5 / (1.0 + rho)),
                    gamma * a / (1.0 + rho),
                    gamma * (c0 - a * a / (2.0 * (1.0 + rho))),
                );
                let second = gauss_quad(gamma * (0.5 - 0.5 / (1.0 - rho)), 0.0, 0.0);
                first + second
            }
            Prepared::Sbm { p, q, .. } => log_add_exp(
                (p * p + q * q).ln() + gamma * sbm_llr(*p, *q, false),
                (2.0 * p * q).ln() + gamma * sbm_llr(*p, *q, true),
            ),
            Prepared::SideInfo { p, mu, log_odds } => {
                let gauss = gauss_quad(0.0, gamma * mu, -0.5 * gamma * mu * mu);
                log_add_exp((1.0 - p).ln() + gamma * log_odds, p.ln() - gamma * log_odds) + gauss
            }
            Prepared::CurieWeiss { theta, mu, null, alt } => {
                match curie_weiss_magnetization_law(*theta, gamma * mu, null.spins) {
                    Ok(tilted) => {
                        (gamma - 1.0) * null.log_partition - gamma * alt.log_partition + tilted.log_partition
                    }
                    Err(_) => f64::NAN,
                }
            }
            Prepared::SparseExponential { log_scale, frac } => {
                if gamma * frac >= 1.0 {
                    INF
                } else {
                    -gamma * log_scale - (1.0 - gamma * frac).ln()
                }
            }
            Prepared::MixtureI { mu, .. } | Prepared::MixtureII { m: mu, .. } => {
                // Factor out the single-component moment to keep the integrand O(1).
                let shift = 0.5 * (gamma * gamma - gamma) * mu * mu;
                let tilt = gamma * mu;
                let g = move |ell: f64| (gamma * ell - shift).exp();
                let i = self.null_expectation_wide(&g, tilt);
                shift + i.ln()
            }
        }
    }

    /// Like `null_expectation` for the two mixture families, but with the
    /// integration box stretched by `tilt` to cover tilted mass.
    fn null_expectation_wide(&self, g: &dyn Fn(f64) -> f64, tilt: f64) -> f64 {
        let tol = 1e-10;
        match &self.prep {
            Prepared::MixtureI { mu, overlap, .. } => {
                let c = *overlap;
                let sd = (1.0 - c * c).sqrt();
                let h = |y1: f64, y2: f64| {
                    // Joint density of (y1, y2) with correlation c.
                    let e = (y2 - c * y1) / sd;
                    (norm_log_pdf(y1) + norm_log_pdf(e)).exp() / sd
                        * g(-0.5 * mu * mu - std::f64::consts::LN_2 + log_add_exp(mu * y1, mu * y2))
                };
                let pts = [-12.0, -4.0, 0.0, 4.0, 0.5 * tilt, tilt, tilt + 4.0, tilt + 12.0];
                integrate_pieces(&|y1: f64| integrate_pieces(&|y2: f64| h(y1, y2), &pts, tol).value, &pts, tol).value
            }
            Prepared::MixtureII { m, .. } => {
                let m = *m;
                let h = |yu: f64, yv: f64| {
                    (norm_log_pdf(yu - m) + norm_log_pdf(yv)).exp() * g(log_cosh(m * yv) - log_cosh(m * yu))
                };
                let pts_u = [m - 12.0, m - 4.0, 0.0, m, m + 4.0, m + 12.0];
                let pts_v = [-tilt - 12.0, -tilt, -4.0, 0.0, 4.0, tilt, tilt + 12.0];
                integrate_pieces(
                    &|yu: f64| integrate_pieces(&|yv: f64| h(yu, yv), &pts_v, tol).value,
                    &pts_u,
                    tol,
                )
                .value
            }
            _ => unreachable!(),
        }
    }
}

/// `log(q/p)` for the correlated-pairs family in rotated coordinates.
fn pairs_llr(mu: f64, rho: f64, z1: f64, z2: f64) -> f64 {
    let a = std::f64::consts::SQRT_2 * mu;
    -0.5 * (1.0 - rho * rho).ln() - (z1 - a).powi(2) / (2.0 * (1.0 + rho)) - z2 * z2 / (2.0 * (1.0 - rho))
        + 0.5 * (z1 * z1 + z2 * z2)
}

/// `log(q/p)` for the SBM pair; `differ` means the two edges disagree.
fn sbm_llr(p: f64, q: f64, differ: bool) -> f64 {
    let ratio = (p * p + q * q) / (2.0 * p * q);
    if differ {
        ratio.ln()
    } else {
        -ratio.ln()
    }
}

fn chi2_sf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    match k {
        1 => return 2.0 * norm_sf(x.sqrt()),
        2 => return (-0.5 * x).exp(),
        _ => {}
    }
    statrs::function::gamma::gamma_ur(0.5 * k as f64, 0.5 * x)
}

/// Null tail of the heteroscedastic log-LR, a quadratic in a standard normal.
fn hetero_tail(mu: f64, sigma2: f64, ell: f64) -> f64 {
    let a = 0.5 * (1.0 - 1.0 / sigma2);
    let b = mu / sigma2;
    let c = -0.5 * sigma2.ln() - mu * mu / (2.0 * sigma2) - ell;
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return if a > 0.0 { 1.0 } else { 0.0 };
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = (q / a, c / q);
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    if a > 0.0 {
        norm_cdf(lo) + norm_sf(hi)
    } else if lo > 0.0 {
        norm_sf(lo) - norm_sf(hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    }
}

/// Real roots of `a x^2 + b x + c = 0`.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + if b >= 0.0 { 1.0 } else { -1.0 } * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

const QUAD_TOL: f64 = 1e-14;

fn pairs_tail(mu: f64, rho: f64, ell: f64) -> Integral {
    let a = std::f64::consts::SQRT_2 * mu;
    let kappa = -rho / (2.0 * (1.0 - rho));
    let qa = rho / (2.0 * (1.0 + rho));
    let qb = a / (1.0 + rho);
    let qc = -0.5 * (1.0 - rho * rho).ln() - a * a / (2.0 * (1.0 + rho));
    let inner = |z1: f64| {
        let d = qa * z1 * z1 + qb * z1 + qc - ell;
        let p = if kappa < 0.0 {
            if d <= 0.0 {
                0.0
            } else {
                1.0 - 2.0 * norm_sf((d / -kappa).sqrt())
            }
        } else if d >= 0.0 {
            1.0
        } else {
            2.0 * norm_sf((-d / kappa).sqrt())
        };
        norm_log_pdf(z1).exp() * p
    };
    let mut pts: Vec<f64> = GAUSS_PIECES.to_vec();
    pts.extend(quadratic_roots(qa, qb, qc - ell).into_iter().filter(|x| x.abs() < 12.0));
    integrate_pieces(&inner, &pts, QUAD_TOL)
}

fn mixture_i_tail(mu: f64, c: f64, ell: f64) -> Integral {
    // logsumexp(mu y1, mu y2) > k with (y1, y2) standard normals of correlation c.
    let k = ell + 0.5 * mu * mu + std::f64::consts::LN_2;
    let sd = (1.0 - c * c).sqrt();
    let edge = k / mu;
    let inner = |y1: f64| {
        let thr = (k + (-(mu * y1 - k).exp_m1()).ln()) / mu;
        norm_log_pdf(y1).exp() * norm_sf((thr - c * y1) / sd)
    };
    let mut pts: Vec<f64> = GAUSS_PIECES.iter().cloned().filter(|&x| x < edge).collect();
    if edge > -12.0 {
        pts.push(edge.min(12.0));
        pts.push(edge - 1.0);
    }
    let body = if edge > -12.0 { integrate_pieces(&inner, &pts, QUAD_TOL) } else { Integral { value: 0.0, error: 0.0, evaluations: 0 } };
    Integral { value: body.value + norm_sf(edge), ..body }
}

fn mixture_ii_tail(m: f64, ell: f64) -> Integral {
    // log cosh(m yv) > ell + log cosh(m yu), yu ~ N(m, 1), yv ~ N(0, 1).
    let inner = |yu: f64| {
        let k = ell + log_cosh(m * yu);
        let p = if k <= 0.0 {
            1.0
        } else {
            // acosh(e^k) = k + log(1 + sqrt(1 - e^{-2k})).
            let x = k + (1.0 + (-(-2.0 * k).exp_m1()).sqrt()).ln();
            2.0 * norm_sf(x / m)
        };
        norm_log_pdf(yu - m).exp() * p
    };
    let pts: Vec<f64> = GAUSS_PIECES.iter().map(|x| x + m).chain([0.0]).collect();
    integrate_pieces(&inner, &pts, QUAD_TOL)
}

/// `E[h(a, b)]` for independent standard normals by nested quadrature.
fn nested_gauss(h: &dyn Fn(f64, f64) -> f64, tol: f64) -> Integral {
    // Tensor-product rules target 1e-10 at best.
    let tol = tol.max(1e-10);
    // An inner error is weighted by the outer density, so the inner target
    // can be relaxed where that density is small.
    let outer = |a: f64| {
        let weight = norm_log_pdf(a).exp();
        let inner_tol = (tol / (16.0 * weight)).min(1e-3);
        let inner = integrate_pieces(&|b: f64| norm_log_pdf(b).exp() * h(a, b), &GAUSS_PIECES, inner_tol);
        weight * inner.value
    };
    integrate_pieces(&outer, &GAUSS_PIECES, tol)
}
