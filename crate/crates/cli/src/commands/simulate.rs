//! `simulate`: forward paths of latent states and noisy observations.

use std::path::PathBuf;

use ctbp::branching::advance;
use ctbp::hybrid::particles_from_gaussian;
use ctbp::linalg::psd_sqrt;
use ctbp::{InitialState, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{build_problem, create_out_dir, TableWriter};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Paths of the written files.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub states: PathBuf,
    pub observations: PathBuf,
}

/// Replicate `k` uses stream `k` of a generator seeded by the config seed.
pub fn cmd_simulate(config: &RunConfig) -> CliResult<SimulateOutput> {
    let problem = build_problem(config, &[])?;
    let obs = config.observation_model()?;
    let steps = config.simulate.steps;
    if let Some(h) = problem.models.horizon() {
        if h < steps {
            return Err(CliError::Config(format!("model covers {h} steps but simulate.steps is {steps}")));
        }
    }
    let noise = psd_sqrt(&obs.r)?;
    let r = obs.state_dim();
    let d = obs.obs_dim();

    let dir = create_out_dir(config)?;
    let out = SimulateOutput {
        states: dir.join("sim_states.csv"),
        observations: dir.join("sim_obs.csv"),
    };
    let mut header: Vec<String> = vec!["replicate".into(), "t".into()];
    header.extend((1..=r).map(|i| format!("z{i}")));
    let mut states = TableWriter::create(&out.states, &header)?;
    let mut header: Vec<String> = vec!["replicate".into(), "t".into()];
    header.extend((1..=d).map(|i| format!("y{i}")));
    let mut observations = TableWriter::create(&out.observations, &header)?;

    for rep in 0..config.simulate.replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(rep as u64);
        let mut z = match &problem.initial {
            InitialState::Fixed(z) => z.clone(),
            InitialState::Gaussian(b) => particles_from_gaussian(b, 1, &mut rng)?.particles.remove(0),
        };
        for t in 1..=steps {
            let model = problem.models.get(t)?;
            z.reset(model.counter_types());
            advance(model, &mut z, 1.0, &mut rng);
            let y = observe(&z, &obs.h, &noise, &mut rng);
            let mut row = vec![rep.to_string(), t.to_string()];
            row.extend(z.iter().map(u64::to_string));
            states.row(&row)?;
            let mut row = vec![rep.to_string(), t.to_string()];
            row.extend(y.iter().map(f64::to_string));
            observations.row(&row)?;
        }
    }
    states.finish()?;
    observations.finish()?;
    Ok(out)
}

fn observe(z: &StateVector, h: &ctbp::DenseMatrix, noise: &ctbp::DenseMatrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let zf = z.to_f64();
    let d = h.rows();
    let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    (0..d)
        .map(|i| {
            let hz: f64 = h.row(i).iter().zip(&zf).map(|(a, b)| a * b).sum();
            hz + (0..d).map(|k| noise[(i, k)] * eps[k]).sum::<f64>()
        })
        .collect()
}
