//! Numerical laboratory for sparse mixture detection.
//!
//! Given a model family where the null is `P_n` and the signal is `Q_n`, the
//! crate evaluates the large-deviation rate function of the normalized
//! log-likelihood ratio, solves for the detection boundary `beta*`, computes
//! Higher Criticism statistics over likelihood-ratio threshold events, and
//! checks phase transitions by Monte Carlo and Hellinger asymptotics.

pub mod boundary;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod extended;
pub mod hc;
pub mod models;
pub mod numeric;
pub mod rate;
pub mod rng;

pub use error::{Error, Result};
