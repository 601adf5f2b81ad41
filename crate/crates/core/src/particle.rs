//! Bootstrap particle filter.
//!
//! Particles are propagated with the exact event simulator and weighted by
//! the observation density. Each step draws one key from the master
//! generator; particle `k` then uses its own ChaCha stream `k` under that key,
//! so results do not depend on the order particles are processed in.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::branching::{advance, BranchingModel, StateVector};
use crate::error::{Error, Result};
use crate::filter::{
    EngineTag, FilterStep, FilterTrace, GaussianBelief, InitialState, ObsDensity,
    ObservationModel, Schedule, TraceStatus,
};
use crate::gaussian::check_series;
use crate::hybrid::{ensemble_moments, particles_from_gaussian};

/// Weighted particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<P> {
    pub particles: Vec<P>,
    pub logweights: Vec<f64>,
}

/// Ensemble of integer CTBP states.
pub type ParticleEnsemble = Ensemble<StateVector>;

impl<P> Ensemble<P> {
    /// Equally weighted ensemble.
    pub fn uniform(particles: Vec<P>) -> Self {
        let logweights = vec![0.0; particles.len()];
        Self {
            particles,
            logweights,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

impl ParticleEnsemble {
    /// Particle states as floating point rows.
    pub fn states(&self) -> Vec<Vec<f64>> {
        self.particles.iter().map(StateVector::to_f64).collect()
    }
}

/// Resampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

/// Particle filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    pub n: usize,
    pub resampling: Resampling,
    /// Store post-resampling particle states in the trace.
    pub keep_particles: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            n: 256,
            resampling: Resampling::Multinomial,
            keep_particles: false,
        }
    }
}

/// `log Σ exp(x)`, −∞ for an empty or all −∞ input.
pub fn logsumexp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draw `n` ancestor indices proportional to `exp(logw)`.
pub fn resample_indices<R: Rng + ?Sized>(
    logw: &[f64],
    n: usize,
    scheme: Resampling,
    rng: &mut R,
) -> Vec<usize> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cum = Vec::with_capacity(logw.len());
    let mut acc = 0.0;
    for w in logw {
        acc += (w - max).exp();
        cum.push(acc);
    }
    let total = acc;
    let last = logw.len() - 1;
    let find = |u: f64| cum.partition_point(|c| *c <= u).min(last);
    match scheme {
        Resampling::Multinomial => (0..n).map(|_| find(rng.random::<f64>() * total)).collect(),
        Resampling::Systematic => {
            let step = total / n as f64;
            let u0 = rng.random::<f64>() * step;
            (0..n).map(|k| find(u0 + k as f64 * step)).collect()
        }
    }
}

/// Generator for particle `k` under a step key.
pub fn particle_rng(key: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(k as u64);
    rng
}

/// Result of one bootstrap step.
#[derive(Debug, Clone)]
pub struct BootstrapOutcome<P> {
    /// Particles after propagation, before resampling.
    pub propagated: Vec<P>,
    /// Resampled, equally weighted ensemble; the input ensemble when every
    /// weight was zero.
    pub ensemble: Ensemble<P>,
    pub loglik: f64,
    pub zero_weights: bool,
}

/// Propagate, weight and resample.
///
/// The increment is `log Σ_k w_k^{prev} φ_k − log Σ_k w_k^{prev}`, which is
/// `log((1/n) Σ_k φ_k)` for an equally weighted input.
pub fn bootstrap_step<P, Prop, W>(
    ens: &Ensemble<P>,
    mut propagate: Prop,
    logweight: W,
    scheme: Resampling,
    master: &mut ChaCha8Rng,
) -> Result<BootstrapOutcome<P>>
where
    P: Clone,
    Prop: FnMut(&P, &mut ChaCha8Rng) -> P,
    W: Fn(&P) -> f64,
{
    let n = ens.len();
    if n == 0 {
        return Err(Error::DegenerateEnsemble("no particles".into()));
    }
    let key = master.next_u64();
    let propagated: Vec<P> = ens
        .particles
        .iter()
        .enumerate()
        .map(|(k, p)| propagate(p, &mut particle_rng(key, k)))
        .collect();
    let obs_lw: Vec<f64> = propagated.iter().map(&logweight).collect();
    if obs_lw.iter().any(|w| w.is_nan()) {
        return Err(Error::Numerical("NaN particle weight".into()));
    }
    let lw: Vec<f64> = obs_lw.iter().zip(&ens.logweights).map(|(a, b)| a + b).collect();
    let loglik = logsumexp(&lw) - logsumexp(&ens.logweights);
    if loglik == f64::NEG_INFINITY {
        return Ok(BootstrapOutcome {
            propagated,
            ensemble: ens.clone(),
            loglik,
            zero_weights: true,
        });
    }
    let idx = resample_indices(&lw, n, scheme, master);
    let particles = idx.iter().map(|&i| propagated[i].clone()).collect();
    Ok(BootstrapOutcome {
        propagated,
        ensemble: Ensemble::uniform(particles),
        loglik,
        zero_weights: false,
    })
}

/// One unit step of the CTBP particle filter: counters are reset, each
/// particle is simulated exactly for one time unit and weighted by
/// `φ(y; H z, R)`.
pub fn pf_step(
    ens: &ParticleEnsemble,
    model: &BranchingModel,
    density: &ObsDensity,
    y: &[f64],
    scheme: Resampling,
    master: &mut ChaCha8Rng,
) -> Result<BootstrapOutcome<StateVector>> {
    let counters = model.counter_types();
    bootstrap_step(
        ens,
        |z, rng| {
            let mut z = z.clone();
            z.reset(counters);
            advance(model, &mut z, 1.0, rng);
            z
        },
        |z| density.eval(&z.to_f64(), y),
        scheme,
        master,
    )
}

/// A particle step packaged for trace assembly.
#[derive(Debug, Clone)]
pub struct ParticleStepOutcome {
    pub step: FilterStep,
    pub next: ParticleEnsemble,
    pub aborted: bool,
}

pub(crate) fn particle_step(
    ens: &ParticleEnsemble,
    model: &BranchingModel,
    density: &ObsDensity,
    y: &[f64],
    t: usize,
    opts: &PfOptions,
    master: &mut ChaCha8Rng,
) -> Result<ParticleStepOutcome> {
    let out = pf_step(ens, model, density, y, opts.resampling, master)?;
    let predicted = ensemble_moments(out.propagated.iter().map(StateVector::to_f64));
    let filtered = if out.zero_weights {
        predicted.clone()
    } else {
        ensemble_moments(out.ensemble.particles.iter().map(StateVector::to_f64))
    };
    let particles = (opts.keep_particles && !out.zero_weights).then(|| out.ensemble.states());
    Ok(ParticleStepOutcome {
        step: FilterStep {
            t,
            engine: EngineTag::Particle,
            predicted,
            filtered,
            loglik: out.loglik,
            particles,
        },
        next: out.ensemble,
        aborted: out.zero_weights,
    })
}

/// Initial ensemble: copies of a fixed state, or rounded, censored draws from
/// a Gaussian belief.
pub fn initial_ensemble(
    initial: &InitialState,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ParticleEnsemble> {
    match initial {
        InitialState::Fixed(z) => Ok(Ensemble::uniform(vec![z.clone(); n])),
        InitialState::Gaussian(b) => particles_from_gaussian(b, n, rng),
    }
}

pub(crate) fn check_pf_inputs(
    models: &Schedule<BranchingModel>,
    obs: &ObservationModel,
    initial: &InitialState,
    ys: &[Vec<f64>],
    opts: &PfOptions,
) -> Result<()> {
    check_series(ys)?;
    models.check_covers(ys.len())?;
    if opts.n == 0 {
        return Err(Error::Config("particle count must be positive".into()));
    }
    let r = models.get(1)?.types();
    if initial.dim() != r || obs.state_dim() != r {
        return Err(Error::Dimension(format!(
            "{r}-type model with a {}-dimensional initial state and {}-dimensional observation map",
            initial.dim(),
            obs.state_dim()
        )));
    }
    if models.items().iter().any(|m| m.has_immigration()) {
        return Err(Error::Model(
            "filters expect immigration-free models; augment immigration first".into(),
        ));
    }
    Ok(())
}

/// Run the bootstrap particle filter; step `t` simulates `models.get(t)`.
pub fn run_pf(
    models: &Schedule<BranchingModel>,
    obs: &ObservationModel,
    initial: &InitialState,
    ys: &[Vec<f64>],
    opts: &PfOptions,
    master: &mut ChaCha8Rng,
) -> Result<FilterTrace> {
    check_pf_inputs(models, obs, initial, ys, opts)?;
    let density = obs.log_density()?;
    let mut ens = initial_ensemble(initial, opts.n, master)?;
    let mut trace = FilterTrace::new();
    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        obs.check_y(y)?;
        let out = particle_step(&ens, models.get(t)?, &density, y, t, opts, master)?;
        trace.push(out.step);
        if out.aborted {
            trace.status = TraceStatus::AbortedZeroWeights { step: t };
            break;
        }
        ens = out.next;
    }
    Ok(trace)
}

/// Particle-filter log-likelihood estimate that gives up early.
///
/// Every increment is at most the observation density's maximum, so once the
/// running total plus that maximum for each remaining step falls below
/// `stop_below`, the final estimate cannot reach it and −∞ is returned.
/// With `stop_below = −∞` this equals `run_pf(..).total_loglik` for the same
/// generator state.
pub fn pf_loglik(
    models: &Schedule<BranchingModel>,
    obs: &ObservationModel,
    initial: &InitialState,
    ys: &[Vec<f64>],
    opts: &PfOptions,
    master: &mut ChaCha8Rng,
    stop_below: f64,
) -> Result<f64> {
    check_pf_inputs(models, obs, initial, ys, opts)?;
    let density = obs.log_density()?;
    let cap = density.max_log_density();
    let mut ens = initial_ensemble(initial, opts.n, master)?;
    let mut total = 0.0;
    for (i, y) in ys.iter().enumerate() {
        obs.check_y(y)?;
        let out = pf_step(&ens, models.get(i + 1)?, &density, y, opts.resampling, master)?;
        if out.zero_weights {
            return Ok(f64::NEG_INFINITY);
        }
        total += out.loglik;
        let remaining = (ys.len() - i - 1) as f64;
        if total + remaining * cap < stop_below {
            return Ok(f64::NEG_INFINITY);
        }
        ens = out.ensemble;
    }
    Ok(total)
}

/// Filtering distribution moments of an equally weighted ensemble.
pub fn belief_of(ens: &ParticleEnsemble) -> GaussianBelief {
    ensemble_moments(ens.particles.iter().map(StateVector::to_f64))
}
