//! Subcommand implementations and the pieces they share.

pub mod filter;
pub mod infer;
pub mod simulate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ctbp::branching::compute_moment_operators;
use ctbp::gaussian::{gaussian_loglik, run_gaussian_filter};
use ctbp::hybrid::run_hybrid;
use ctbp::models::{build_piecewise, PiecewiseParams};
use ctbp::particle::{pf_loglik, run_pf};
use ctbp::{
    BranchingModel, DenseMatrix, FilterTrace, GaussianBelief, InitialState, MomentOperators,
    ObservationModel, Schedule, StateVector,
};
use rand_chacha::ChaCha8Rng;

use crate::config::{EngineKind, Inferred, ModelConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::series::{load_series, ObservationSeries};

/// Per-step models, their moment operators and the initial condition.
#[derive(Debug, Clone)]
pub struct Problem {
    pub models: Schedule<BranchingModel>,
    pub ops: Schedule<MomentOperators>,
    /// Initial condition for the particle and hybrid engines.
    pub initial: InitialState,
    /// Initial belief for the Gaussian engine.
    pub belief: GaussianBelief,
}

/// Natural-scale values for the inferred quantities, in [`parameter_names`]
/// order; an empty slice means the config's own values.
pub fn build_problem(config: &RunConfig, theta: &[f64]) -> CliResult<Problem> {
    let inferred = if theta.is_empty() { Vec::new() } else { config.inferred() };
    let mut values = theta.iter().copied();
    let mut take = |name: Inferred, default: f64| {
        if inferred.contains(&name) {
            values.next().unwrap_or(default)
        } else {
            default
        }
    };
    match &config.model {
        ModelConfig::PiecewiseSeir { r_values, window_len, delta, lambda, initial, .. } => {
            let r: Vec<f64> = if inferred.contains(&Inferred::R) {
                (0..r_values.len()).map(|_| values.next().unwrap_or(f64::NAN)).collect()
            } else {
                r_values.clone()
            };
            let params = PiecewiseParams::from_r_values(&r, *window_len, *delta, *lambda, config.observation.p)?;
            let built = build_piecewise(&params)?;
            let (initial, belief) = if inferred.contains(&Inferred::Initial) {
                let e0 = values.next().unwrap_or(f64::NAN);
                let i0 = values.next().unwrap_or(f64::NAN);
                let fixed = StateVector(vec![round_count(e0), round_count(i0), 0]);
                (InitialState::Fixed(fixed), GaussianBelief::point_mass(&[e0, i0, 0.0]))
            } else {
                let mut cov = DenseMatrix::zeros(3, 3);
                cov.set_block(0, 0, &DenseMatrix::from_rows(&initial.cov)?);
                let b = GaussianBelief::new(vec![initial.mean[0], initial.mean[1], 0.0], cov)?;
                (InitialState::Gaussian(b.clone()), b)
            };
            Ok(Problem {
                models: built.models,
                ops: built.operators,
                initial,
                belief,
            })
        }
        ModelConfig::Seir { r0, delta, lambda, .. } | ModelConfig::Se8i8r { r0, delta, lambda, .. } => {
            let (r0, delta, lambda) = (
                take(Inferred::R0, *r0),
                take(Inferred::Delta, *delta),
                take(Inferred::Lambda, *lambda),
            );
            let mut substituted = config.clone();
            if let ModelConfig::Seir { r0: a, delta: b, lambda: c, .. }
            | ModelConfig::Se8i8r { r0: a, delta: b, lambda: c, .. } = &mut substituted.model
            {
                (*a, *b, *c) = (r0, delta, lambda);
            }
            constant_problem(&substituted)
        }
        ModelConfig::Custom { .. } => constant_problem(config),
    }
}

fn constant_problem(config: &RunConfig) -> CliResult<Problem> {
    let model = config.build_model(None)?;
    let ops = compute_moment_operators(&model, 1.0)?;
    let z0 = config.z0().unwrap_or_default();
    if z0.len() != model.types() {
        return Err(CliError::Config(format!(
            "z0 has {} entries for a {}-type model",
            z0.len(),
            model.types()
        )));
    }
    let z0 = StateVector(z0);
    Ok(Problem {
        belief: GaussianBelief::point_mass(&z0.to_f64()),
        initial: InitialState::Fixed(z0),
        models: Schedule::constant(model),
        ops: Schedule::constant(ops),
    })
}

fn round_count(x: f64) -> u64 {
    let r = x.round();
    if r > 0.0 {
        r as u64
    } else {
        0
    }
}

/// Full filter run with the configured engine.
pub fn run_engine(
    config: &RunConfig,
    problem: &Problem,
    obs: &ObservationModel,
    ys: &[Vec<f64>],
    keep_particles: bool,
    rng: &mut ChaCha8Rng,
) -> CliResult<FilterTrace> {
    let opts = config.pf_options(keep_particles);
    let trace = match config.engine.kind {
        EngineKind::Gaussian => run_gaussian_filter(&problem.ops, obs, &problem.belief, ys)?,
        EngineKind::Particle => run_pf(&problem.models, obs, &problem.initial, ys, &opts, rng)?,
        EngineKind::Hybrid => run_hybrid(
            &problem.models,
            &problem.ops,
            obs,
            &problem.initial,
            ys,
            &opts,
            &config.switch_policy()?,
            rng,
        )?,
    };
    Ok(trace)
}

/// Log likelihood of `ys` under the configured engine. The particle engine
/// may stop early and return −∞ once its estimate cannot reach
/// `stop_below`.
pub fn log_likelihood(
    config: &RunConfig,
    problem: &Problem,
    obs: &ObservationModel,
    ys: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    stop_below: f64,
) -> CliResult<f64> {
    match config.engine.kind {
        EngineKind::Gaussian => Ok(gaussian_loglik(&problem.ops, obs, &problem.belief, ys)?),
        EngineKind::Particle => {
            let opts = config.pf_options(false);
            Ok(pf_loglik(&problem.models, obs, &problem.initial, ys, &opts, rng, stop_below)?)
        }
        EngineKind::Hybrid => Ok(run_engine(config, problem, obs, ys, false, rng)?.total_loglik),
    }
}

pub(crate) fn require_data(config: &RunConfig) -> CliResult<ObservationSeries> {
    let path = config
        .io
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("io.data is required for this command".into()))?;
    load_series(path)
}

pub(crate) fn create_out_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = config.io.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

/// Buffered CSV-style writer that maps IO failures to [`CliError::Io`].
pub(crate) struct TableWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TableWriter {
    pub fn create(path: &Path, header: &[String]) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.row(header)?;
        Ok(w)
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> CliResult<()> {
        let line = fields.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",");
        writeln!(self.out, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}
