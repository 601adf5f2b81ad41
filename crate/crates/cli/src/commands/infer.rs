//! `infer`: adaptive Metropolis-Hastings over the configured unknowns.

use std::path::PathBuf;
use std::time::Instant;

use ctbp::inference::diagnostics::{mean, variance};
use ctbp::inference::{ess, mh_run_bounded, quantiles, rhat, ChainTrace, MhConfig, ParameterVector, PriorComponent, PriorSpec, Transform};
use ctbp::DenseMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_problem, create_out_dir, log_likelihood, require_data, TableWriter};
use crate::config::{Inferred, ModelConfig, RunConfig};
use crate::error::{CliError, CliResult};

pub const SUMMARY_QUANTILES: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q50: f64,
    pub q97_5: f64,
    /// Sum of per-chain effective sample sizes.
    pub ess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub engine: String,
    pub chains: usize,
    /// Retained draws per chain.
    pub draws: usize,
    /// Wall-clock time of the sampling loops.
    pub seconds: f64,
    pub acceptance: Vec<f64>,
    pub parameters: Vec<ParameterSummary>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct InferOutput {
    pub samples: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

/// Parameter names, transforms and natural-scale starting values.
pub fn parameters(config: &RunConfig) -> CliResult<ParameterVector> {
    let mut names = Vec::new();
    let mut transforms = Vec::new();
    let mut start = Vec::new();
    let inferred = config.inferred();
    match &config.model {
        ModelConfig::Seir { r0, delta, lambda, .. } | ModelConfig::Se8i8r { r0, delta, lambda, .. } => {
            for (tag, name, value) in [
                (Inferred::R0, "R0", *r0),
                (Inferred::Delta, "delta", *delta),
                (Inferred::Lambda, "lambda", *lambda),
            ] {
                if inferred.contains(&tag) {
                    names.push(name.to_string());
                    transforms.push(Transform::Log);
                    start.push(value);
                }
            }
        }
        ModelConfig::PiecewiseSeir { r_values, initial, .. } => {
            if inferred.contains(&Inferred::R) {
                for (n, r) in r_values.iter().enumerate() {
                    names.push(format!("R{}", n + 1));
                    transforms.push(Transform::Log);
                    start.push(*r);
                }
            }
            if inferred.contains(&Inferred::Initial) {
                names.extend(["E0".to_string(), "I0".to_string()]);
                transforms.extend([Transform::Identity; 2]);
                start.extend(&initial.mean);
            }
        }
        ModelConfig::Custom { .. } => {}
    }
    if names.is_empty() {
        return Err(CliError::Config("nothing to infer for this model".into()));
    }
    Ok(ParameterVector::from_natural(names, transforms, &start)?)
}

pub fn prior_spec(config: &RunConfig, params: &ParameterVector) -> CliResult<PriorSpec> {
    let pc = &config.mcmc.prior;
    let index = |name: &str| params.names.iter().position(|n| n == name);
    let mut components = Vec::new();
    if let Some(i) = index("R0") {
        components.push(PriorComponent::gamma(i, pc.r0.shape, pc.r0.scale)?);
    }
    for (name, gamma) in [("delta", &pc.delta), ("lambda", &pc.lambda)] {
        if let (Some(i), Some(g)) = (index(name), gamma) {
            components.push(PriorComponent::gamma(i, g.shape, g.scale)?);
        }
    }
    if let ModelConfig::PiecewiseSeir { r_values, window_len, initial, .. } = &config.model {
        if let Some(first) = index("R1") {
            let idx: Vec<usize> = (first..first + r_values.len()).collect();
            let grid: Vec<f64> = (0..r_values.len()).map(|n| (n * window_len) as f64).collect();
            components.push(PriorComponent::gp_grid(idx, &grid, pc.gp.variance, pc.gp.length_scale, pc.gp.mean)?);
        }
        if let (Some(e), Some(i)) = (index("E0"), index("I0")) {
            let cov = DenseMatrix::from_rows(&initial.cov)?;
            components.push(PriorComponent::mvn(vec![e, i], initial.mean.clone(), &cov)?);
            components.push(PriorComponent::bounds(e, 0.0, f64::INFINITY)?);
            components.push(PriorComponent::bounds(i, 0.0, f64::INFINITY)?);
        }
    }
    Ok(PriorSpec::new(components))
}

/// Chain `c` runs MH with seed `seed + c`; particle engines draw from a
/// separate generator derived from the same value.
pub fn cmd_infer(config: &RunConfig) -> CliResult<InferOutput> {
    let params = parameters(config)?;
    let prior = prior_spec(config, &params)?;
    let obs = config.observation_model()?;
    let ys = if config.mcmc.likelihood {
        let series = require_data(config)?;
        if series.dim() != obs.obs_dim() {
            return Err(CliError::Config(format!(
                "data has {} columns but the observation model has {}",
                series.dim(),
                obs.obs_dim()
            )));
        }
        Some(series.values)
    } else {
        None
    };
    let initial_proposal = match &config.mcmc.initial_proposal_sd {
        Some(sd) if sd.len() != params.dim() => {
            return Err(CliError::Config(format!(
                "mcmc.initial_proposal_sd has {} entries for {} parameters",
                sd.len(),
                params.dim()
            )))
        }
        Some(sd) => Some(DenseMatrix::from_diag(&sd.iter().map(|s| s * s).collect::<Vec<_>>())),
        None => None,
    };

    if let Some(ys) = &ys {
        let problem = build_problem(config, &params.natural())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ll = log_likelihood(config, &problem, &obs, ys, &mut rng, f64::NEG_INFINITY)?;
        if !ll.is_finite() {
            return Err(CliError::Numerical(format!(
                "log likelihood at the starting point {:?} is {ll}",
                params.natural()
            )));
        }
    }

    let started = Instant::now();
    let results: Vec<CliResult<ChainTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.mcmc.chains)
            .map(|c| {
                let seed = config.seed.wrapping_add(c as u64);
                let mh = MhConfig {
                    steps: config.mcmc.steps,
                    burn_in: config.mcmc.burn_in,
                    adapt_window: config.mcmc.adapt_window,
                    scale: config.mcmc.scale,
                    initial_proposal: initial_proposal.clone(),
                    seed,
                };
                let (params, prior, obs, ys) = (&params, &prior, &obs, &ys);
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
                    let loglik = |theta: &[f64], needed: f64| -> f64 {
                        let Some(ys) = ys else { return 0.0 };
                        build_problem(config, theta)
                            .and_then(|p| log_likelihood(config, &p, obs, ys, &mut rng, needed))
                            .unwrap_or(f64::NEG_INFINITY)
                    };
                    mh_run_bounded(loglik, prior, params, &mh).map_err(CliError::from)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Numerical("sampler thread panicked".into()))))
            .collect()
    });
    let seconds = started.elapsed().as_secs_f64();
    let chains = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let dir = create_out_dir(config)?;
    let samples = dir.join("samples.csv");
    write_samples(&samples, &params.names, &chains)?;
    let summary = Summary {
        engine: config.engine.kind.as_str().to_string(),
        chains: chains.len(),
        draws: chains[0].samples.len(),
        seconds,
        acceptance: chains.iter().map(ChainTrace::acceptance_rate).collect(),
        parameters: summarize(&params.names, &chains)?,
        config: config.clone(),
    };
    let summary_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(&summary_path, json + "\n").map_err(|e| CliError::io(&summary_path, e))?;
    Ok(InferOutput {
        samples,
        summary_path,
        summary,
    })
}

fn write_samples(path: &std::path::Path, names: &[String], chains: &[ChainTrace]) -> CliResult<()> {
    let mut header: Vec<String> = vec!["chain".into(), "step".into()];
    header.extend(names.iter().cloned());
    header.extend(["loglik".into(), "accepted".into()]);
    let mut table = TableWriter::create(path, &header)?;
    for (c, chain) in chains.iter().enumerate() {
        for (k, theta) in chain.samples.iter().enumerate() {
            let mut row = vec![c.to_string(), (chain.burn_in + k + 1).to_string()];
            row.extend(theta.iter().map(f64::to_string));
            row.push(chain.logliks[k].to_string());
            row.push(u8::from(chain.accepted[k]).to_string());
            table.row(&row)?;
        }
    }
    table.finish()
}

/// Pooled moments and quantiles, summed ESS, and R̂ across chains when
/// there is more than one.
pub fn summarize(names: &[String], chains: &[ChainTrace]) -> CliResult<Vec<ParameterSummary>> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let columns: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let pooled: Vec<f64> = columns.concat();
            let q = quantiles(&pooled, &SUMMARY_QUANTILES);
            let rhat = if chains.len() > 1 { Some(rhat(&columns)?) } else { None };
            Ok(ParameterSummary {
                name: name.clone(),
                mean: mean(&pooled),
                sd: variance(&pooled).sqrt(),
                q2_5: q[0],
                q50: q[1],
                q97_5: q[2],
                ess: columns.iter().map(|c| ess(c)).sum(),
                rhat,
            })
        })
        .collect()
}
