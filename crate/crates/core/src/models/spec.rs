use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const UNIT_TOL: f64 = 1e-10;
const MATRIX_TOL: f64 = 1e-8;

/// A detection problem: the null `P_n` and signal `Q_n` of one model family.
///
/// Parses from JSON of the form `{"family": "idj", "r": 0.25}`. Matrices are
/// row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum ModelSpec {
    /// `N(0,1)` against `N(sqrt(2 r log n), 1)`.
    #[serde(rename = "idj")]
    Idj { r: f64 },
    /// `N(0, sigma)` against `N(sqrt(2 r log n) u, sigma)`.
    #[serde(rename = "multivariate_gaussian")]
    MultivariateGaussian { r: f64, u: Vec<f64>, sigma: Vec<Vec<f64>> },
    /// Brownian motion against Brownian motion with drift
    /// `sqrt(2 r log n) f`, observed on `fprime.len()` uniform steps.
    /// `fprime` holds `f'` at the left end of each step and must satisfy
    /// `sum(f'^2) / m = 1`.
    #[serde(rename = "brownian_drift")]
    BrownianDrift { r: f64, fprime: Vec<f64> },
    /// `N(0,1)` against `N(sqrt(2 r log n), sigma2)`.
    #[serde(rename = "heteroscedastic")]
    Heteroscedastic { r: f64, sigma2: f64 },
    /// `N(0, I)` against an even mixture of `N(mu_n u1, I)` and `N(mu_n u2, I)`.
    #[serde(rename = "mixture_of_mixtures_i")]
    MixtureOfMixturesI { r: f64, u1: Vec<f64>, u2: Vec<f64> },
    /// Symmetric two-component mixtures along orthonormal `u` (null) and `v` (signal).
    #[serde(rename = "mixture_of_mixtures_ii")]
    MixtureOfMixturesII { r: f64, u: Vec<f64>, v: Vec<f64> },
    /// `N(0, I_p)` against `N(0, I_p + r Q A_k Q^T)`.
    #[serde(rename = "low_rank")]
    LowRank { r: f64, k: usize, q: Vec<Vec<f64>> },
    /// `N(0, I_2)` against `N(sqrt(r log n) 1, [[1, rho], [rho, 1]])`.
    #[serde(rename = "correlated_pairs")]
    CorrelatedPairs { r: f64, rho: f64 },
    /// Pairs of edge indicators from the same community (null) or
    /// different communities (signal) of a two-block SBM.
    #[serde(rename = "sbm_pair")]
    SbmPair { r: f64 },
    /// The pair model reduced to `U = A + B mod 2`.
    #[serde(rename = "sbm_reduced")]
    SbmReduced { r: f64 },
    /// A z-score `W` plus a Bernoulli flag `A` of accuracy `p = n^r / (1 + n^r)`.
    #[serde(rename = "side_info")]
    SideInfo { r: f64, rho: f64 },
    /// Curie–Weiss model on `N = ceil(log n)` spins, without (null) and with
    /// (signal) an external field `mu`.
    #[serde(rename = "curie_weiss")]
    CurieWeiss { theta: f64, mu: f64 },
    /// `Exp(1)` against `Exp` with mean `1 + n^r`. Fails the tail condition.
    #[serde(rename = "sparse_exponential")]
    SparseExponential { r: f64 },
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a finite positive number, got {x}")))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(field: &str, u: &[f64]) -> Result<()> {
    if u.is_empty() {
        return Err(invalid(field, "must be nonempty"));
    }
    let norm2 = dot(u, u);
    if (norm2 - 1.0).abs() > UNIT_TOL {
        return Err(invalid(field, format!("must be a unit vector, squared norm is {norm2}")));
    }
    Ok(())
}

fn square(field: &str, m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|row| row.len() != d) {
        return Err(invalid(field, format!("must be a {d}x{d} matrix")));
    }
    if m.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(())
}

impl ModelSpec {
    /// Short family name, as used in JSON.
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::Idj { .. } => "idj",
            ModelSpec::MultivariateGaussian { .. } => "multivariate_gaussian",
            ModelSpec::BrownianDrift { .. } => "brownian_drift",
            ModelSpec::Heteroscedastic { .. } => "heteroscedastic",
            ModelSpec::MixtureOfMixturesI { .. } => "mixture_of_mixtures_i",
            ModelSpec::MixtureOfMixturesII { .. } => "mixture_of_mixtures_ii",
            ModelSpec::LowRank { .. } => "low_rank",
            ModelSpec::CorrelatedPairs { .. } => "correlated_pairs",
            ModelSpec::SbmPair { .. } => "sbm_pair",
            ModelSpec::SbmReduced { .. } => "sbm_reduced",
            ModelSpec::SideInfo { .. } => "side_info",
            ModelSpec::CurieWeiss { .. } => "curie_weiss",
            ModelSpec::SparseExponential { .. } => "sparse_exponential",
        }
    }

    /// Checks every parameter constraint of the family.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Idj { r }
            | ModelSpec::SbmPair { r }
            | ModelSpec::SbmReduced { r }
            | ModelSpec::SparseExponential { r } => positive("r", *r),
            ModelSpec::MultivariateGaussian { r, u, sigma } => {
                positive("r", *r)?;
                unit("u", u)?;
                square("sigma", sigma, u.len())?;
                for i in 0..u.len() {
                    for j in 0..i {
                        if (sigma[i][j] - sigma[j][i]).abs() > MATRIX_TOL {
                            return Err(invalid("sigma", "must be symmetric"));
                        }
                    }
                }
                let m = nalgebra::DMatrix::from_fn(u.len(), u.len(), |i, j| sigma[i][j]);
                if nalgebra::Cholesky::new(m).is_none() {
                    return Err(invalid("sigma", "must be positive definite"));
                }
                Ok(())
            }
            ModelSpec::BrownianDrift { r, fprime } => {
                positive("r", *r)?;
                if fprime.len() < 2 {
                    return Err(invalid("fprime", "needs at least 2 steps"));
                }
                let energy = dot(fprime, fprime) / fprime.len() as f64;
                if (energy - 1.0).abs() > UNIT_TOL {
                    return Err(invalid(
                        "fprime",
                        format!("mean of fprime^2 must be 1, got {energy}"),
                    ));
                }
                Ok(())
            }
            ModelSpec::Heteroscedastic { r, sigma2 } => {
                positive("r", *r)?;
                positive("sigma2", *sigma2)?;
                if *sigma2 == 1.0 {
                    return Err(invalid("sigma2", "must differ from 1"));
                }
                Ok(())
            }
            ModelSpec::MixtureOfMixturesI { r, u1, u2 } => {
                positive("r", *r)?;
                unit("u1", u1)?;
                unit("u2", u2)?;
                if u1.len() != u2.len() {
                    return Err(invalid("u2", "must have the same dimension as u1"));
                }
                if dot(u1, u2).abs() >= 1.0 - UNIT_TOL {
                    return Err(invalid("u2", "must be linearly independent of u1"));
                }
                Ok(())
            }
            ModelSpec::MixtureOfMixturesII { r, u, v } => {
                positive("r", *r)?;
                if *r > 1.0 {
                    return Err(invalid("r", "must lie in (0, 1]"));
                }
                unit("u", u)?;
                unit("v", v)?;
                if u.len() != v.len() {
                    return Err(invalid("v", "must have the same dimension as u"));
                }
                if dot(u, v).abs() > UNIT_TOL {
                    return Err(invalid("v", "must be orthogonal to u"));
                }
                Ok(())
            }
            ModelSpec::LowRank { r, k, q } => {
                positive("r", *r)?;
                let p = q.len();
                square("q", q, p)?;
                if *k < 1 || *k >= p {
                    return Err(invalid("k", format!("must satisfy 1 <= k < p = {p}")));
                }
                for i in 0..p {
                    for j in 0..p {
                        let g: f64 = (0..p).map(|l| q[l][i] * q[l][j]).sum();
                        let want = if i == j { 1.0 } else { 0.0 };
                        if (g - want).abs() > MATRIX_TOL {
                            return Err(invalid("q", "must be orthogonal"));
                        }
                    }
                }
                Ok(())
            }
            ModelSpec::CorrelatedPairs { r, rho } => {
                positive("r", *r)?;
                if !(rho.is_finite() && *rho > -1.0 && *rho < 1.0 && *rho != 0.0) {
                    return Err(invalid("rho", "must lie in (-1, 1) and differ from 0"));
                }
                Ok(())
            }
            ModelSpec::SideInfo { r, rho } => {
                positive("r", *r)?;
                if !(rho.is_finite() && *rho > 0.0 && *rho <= 1.0) {
                    return Err(invalid("rho", "must lie in (0, 1]"));
                }
                Ok(())
            }
            ModelSpec::CurieWeiss { theta, mu } => {
                positive("theta", *theta)?;
                positive("mu", *mu)
            }
        }
    }

    /// Largest scalar parameter, used to cap search ranges.
    pub fn max_parameter(&self) -> f64 {
        match self {
            ModelSpec::Idj { r }
            | ModelSpec::BrownianDrift { r, .. }
            | ModelSpec::MultivariateGaussian { r, .. }
            | ModelSpec::MixtureOfMixturesI { r, .. }
            | ModelSpec::MixtureOfMixturesII { r, .. }
            | ModelSpec::LowRank { r, .. }
            | ModelSpec::SbmPair { r }
            | ModelSpec::SbmReduced { r }
            | ModelSpec::SparseExponential { r } => *r,
            ModelSpec::Heteroscedastic { r, sigma2 } => r.max(*sigma2),
            ModelSpec::CorrelatedPairs { r, rho } | ModelSpec::SideInfo { r, rho } => {
                r.max(rho.abs())
            }
            ModelSpec::CurieWeiss { theta, mu } => theta.max(*mu),
        }
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| crate::error::Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// A Brownian drift with `f'(t) = sqrt(2) cos(pi t)` on `m` steps.
    pub fn brownian_cosine(r: f64, m: usize) -> Self {
        let fprime = (0..m)
            .map(|k| {
                let t = k as f64 / m as f64;
                std::f64::consts::SQRT_2 * (std::f64::consts::PI * t).cos()
            })
            .collect();
        ModelSpec::BrownianDrift { r, fprime }
    }
}
