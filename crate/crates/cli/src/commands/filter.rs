//! `filter`: per-step filtering quantiles and likelihood increments.

use std::path::PathBuf;

use ctbp::inference::quantiles;
use ctbp::{FilterStep, TraceStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{build_problem, create_out_dir, require_data, run_engine, TableWriter};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const QUANTILES: [f64; 3] = [0.1, 0.5, 0.9];

/// Path of `filter.csv` and the run status.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub path: PathBuf,
    pub status: TraceStatus,
    pub total_loglik: f64,
}

pub fn status_str(status: TraceStatus) -> &'static str {
    match status {
        TraceStatus::Completed => "completed",
        TraceStatus::AbortedNegativeMean { .. } => "aborted-negative-mean",
        TraceStatus::AbortedZeroWeights { .. } => "aborted-zero-weights",
    }
}

/// Writes the table even when the run aborts; the abort is then returned as
/// an error.
pub fn cmd_filter(config: &RunConfig) -> CliResult<FilterOutput> {
    let series = require_data(config)?;
    let problem = build_problem(config, &[])?;
    let obs = config.observation_model()?;
    if series.dim() != obs.obs_dim() {
        return Err(CliError::Config(format!(
            "data has {} columns but the observation model has {}",
            series.dim(),
            obs.obs_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trace = run_engine(config, &problem, &obs, &series.values, true, &mut rng)?;

    let r = obs.state_dim();
    let dir = create_out_dir(config)?;
    let path = dir.join("filter.csv");
    let mut header: Vec<String> = vec!["t".into(), "engine".into()];
    for i in 1..=r {
        header.extend([format!("z{i}_q10"), format!("z{i}_median"), format!("z{i}_q90")]);
    }
    header.push("loglik".into());
    let mut table = TableWriter::create(&path, &header)?;
    for step in &trace.steps {
        let mut row = vec![step.t.to_string(), step.engine.as_str().to_string()];
        row.extend(step_quantiles(step).iter().map(f64::to_string));
        row.push(step.loglik.to_string());
        table.row(&row)?;
    }
    let mut total = vec!["total".to_string(), status_str(trace.status).to_string()];
    total.extend(std::iter::repeat_n(String::new(), 3 * r));
    total.push(trace.total_loglik.to_string());
    table.row(&total)?;
    table.finish()?;

    match trace.status {
        TraceStatus::Completed => Ok(FilterOutput {
            path,
            status: trace.status,
            total_loglik: trace.total_loglik,
        }),
        TraceStatus::AbortedNegativeMean { step } => Err(CliError::AbortedNegativeMean { step }),
        TraceStatus::AbortedZeroWeights { step } => {
            Err(CliError::Numerical(format!("all particle weights vanished at step {step}")))
        }
    }
}

/// Per type: 10%, 50%, 90% quantiles of the filtering distribution.
/// Particle steps use the empirical particle quantiles; Gaussian steps use
/// the normal marginals.
pub fn step_quantiles(step: &FilterStep) -> Vec<f64> {
    let r = step.filtered.dim();
    match &step.particles {
        Some(ps) => (0..r)
            .flat_map(|i| {
                let col: Vec<f64> = ps.iter().map(|p| p[i]).collect();
                quantiles(&col, &QUANTILES)
            })
            .collect(),
        None => {
            let std = Normal::standard();
            let z: Vec<f64> = QUANTILES.iter().map(|q| std.inverse_cdf(*q)).collect();
            (0..r)
                .flat_map(|i| {
                    let m = step.filtered.mean[i];
                    let sd = step.filtered.cov[(i, i)].max(0.0).sqrt();
                    z.iter().map(move |zq| if *zq == 0.0 { m } else { m + sd * zq }).collect::<Vec<_>>()
                })
                .collect()
        }
    }
}
