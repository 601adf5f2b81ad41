//! Priors, Metropolis-Hastings sampling and chain diagnostics.

pub mod diagnostics;
pub mod mh;
pub mod predictive;
pub mod prior;

pub use diagnostics::{ess, quantile, quantiles, rhat};
pub use mh::{mh_run, mh_run_bounded, ChainTrace, MhConfig};
pub use predictive::posterior_predictive;
pub use prior::{log_prior, ParameterVector, PriorComponent, PriorSpec, Transform};
