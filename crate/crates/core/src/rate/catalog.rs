use nalgebra::{DMatrix, DVector};

use super::{RateForm, RateFunction};
use crate::error::Result;
use crate::models::ModelSpec;

/// `<u, sigma^{-1} u>` for the multivariate Gaussian family.
pub(crate) fn signal_energy(u: &[f64], sigma: &[Vec<f64>]) -> f64 {
    let d = u.len();
    let m = DMatrix::from_fn(d, d, |i, j| sigma[i][j]);
    let u = DVector::from_column_slice(u);
    let chol = nalgebra::Cholesky::new(m).expect("validated positive definite");
    u.dot(&chol.solve(&u))
}

/// The closed-form rate function of a model family.
///
/// The multivariate Gaussian rate is the univariate one with `r` replaced by
/// `r <u, sigma^{-1} u>`. Both SBM variants share the two-point rate. The
/// sparse exponential entry is the naive rate; its boundary is known to be
/// wrong because the family fails the tail condition.
pub fn analytic_rate(spec: &ModelSpec) -> Result<RateFunction> {
    spec.validate()?;
    let form = match spec {
        ModelSpec::Idj { r } | ModelSpec::BrownianDrift { r, .. } => RateForm::Gaussian { r: *r },
        ModelSpec::MultivariateGaussian { r, u, sigma } => {
            RateForm::Gaussian { r: r * signal_energy(u, sigma) }
        }
        ModelSpec::Heteroscedastic { r, sigma2 } => {
            RateForm::Heteroscedastic { r: *r, sigma2: *sigma2 }
        }
        ModelSpec::MixtureOfMixturesI { r, u1, u2 } => {
            let overlap = u1.iter().zip(u2).map(|(a, b)| a * b).sum();
            RateForm::MixtureI { r: *r, overlap }
        }
        ModelSpec::MixtureOfMixturesII { r, .. } => RateForm::MixtureII { r: *r },
        ModelSpec::LowRank { r, .. } => RateForm::LowRank { r: *r },
        ModelSpec::CorrelatedPairs { r, rho } => RateForm::CorrelatedPairs { r: *r, rho: *rho },
        ModelSpec::SbmPair { r } | ModelSpec::SbmReduced { r } => RateForm::TwoPoint { r: *r },
        ModelSpec::SideInfo { r, rho } => RateForm::SideInfo { r: *r, rho: *rho },
        ModelSpec::CurieWeiss { theta, mu } => RateForm::CurieWeiss { theta: *theta, mu: *mu },
        ModelSpec::SparseExponential { r } => RateForm::SparseExponential { r: *r },
    };
    RateFunction::new(spec.family(), form)
}
