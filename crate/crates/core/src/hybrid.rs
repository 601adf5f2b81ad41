//! Hybrid filter: particle steps while the population is small, Gaussian
//! steps once every tracked mean reaches a threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::branching::{BranchingModel, MomentOperators, StateVector};
use crate::error::{Error, Result};
use crate::filter::{FilterTrace, GaussianBelief, InitialState, ObservationModel, Schedule, TraceStatus};
use crate::gaussian::gaussian_step;
use crate::linalg::{psd_sqrt, DenseMatrix};
use crate::particle::{
    check_pf_inputs, initial_ensemble, particle_step, Ensemble, ParticleEnsemble, PfOptions,
};

/// Threshold rule deciding when the Gaussian engine takes over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPolicy {
    /// Minimum mean agent count `s`.
    pub threshold: f64,
    /// Include counter coordinates in the minimum. Counters are reset every
    /// step, so including them keeps the particle engine in charge for any
    /// positive threshold.
    pub include_counters: bool,
}

impl SwitchPolicy {
    pub fn new(threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::Config(format!("switch threshold {threshold} must be >= 0")));
        }
        Ok(Self {
            threshold,
            include_counters: false,
        })
    }
}

/// True when the minimum of `mean` over the policy's coordinates is at least
/// the threshold. A zero threshold always selects the Gaussian engine.
pub fn in_gaussian_regime(mean: &[f64], counter_types: &[usize], policy: &SwitchPolicy) -> bool {
    if policy.threshold <= 0.0 {
        return true;
    }
    mean.iter()
        .enumerate()
        .filter(|(i, _)| policy.include_counters || !counter_types.contains(i))
        .all(|(_, m)| *m >= policy.threshold)
}

/// Equal-weight mean and covariance (denominator `n`) of a set of states.
pub(crate) fn ensemble_moments<I>(states: I) -> GaussianBelief
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let states: Vec<Vec<f64>> = states.into_iter().collect();
    let n = states.len() as f64;
    let r = states.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; r];
    for z in &states {
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = DenseMatrix::zeros(r, r);
    for z in &states {
        for i in 0..r {
            let di = z[i] - mean[i];
            if di == 0.0 {
                continue;
            }
            for j in 0..r {
                cov[(i, j)] += di * (z[j] - mean[j]);
            }
        }
    }
    GaussianBelief {
        mean,
        cov: cov.scale(1.0 / n),
    }
}

/// Moments of an equally weighted ensemble, covariance with denominator `n`.
pub fn moments_from_particles(ens: &ParticleEnsemble) -> Result<GaussianBelief> {
    if ens.len() < 2 {
        return Err(Error::DegenerateEnsemble(format!(
            "moments need at least 2 particles, got {}",
            ens.len()
        )));
    }
    Ok(ensemble_moments(ens.particles.iter().map(StateVector::to_f64)))
}

/// `n` Gaussian draws, each coordinate rounded half away from zero and then
/// clamped at 0.
pub fn particles_from_gaussian<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    n: usize,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let r = belief.dim();
    let root = psd_sqrt(&belief.cov)?;
    let mut particles = Vec::with_capacity(n);
    let mut eps = vec![0.0; r];
    for _ in 0..n {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let z = (0..r)
            .map(|i| {
                let x = belief.mean[i] + (0..r).map(|k| root[(i, k)] * eps[k]).sum::<f64>();
                let x = x.round();
                if x > 0.0 {
                    x as u64
                } else {
                    0
                }
            })
            .collect();
        particles.push(StateVector(z));
    }
    Ok(Ensemble::uniform(particles))
}

enum Representation {
    Belief(GaussianBelief),
    Particles(ParticleEnsemble),
}

/// Run the hybrid filter.
///
/// Before each step the policy is evaluated on the latest filtered mean (the
/// initial mean before step 1) and the state is handed over if the engine
/// changes: particles to moments, or moments to rounded, censored draws.
/// Step `t` uses `models.get(t)` for particle steps and `ops.get(t)` for
/// Gaussian steps. The total is the sum of Gaussian increments over the
/// Gaussian steps plus particle increments over the rest.
#[allow(clippy::too_many_arguments)]
pub fn run_hybrid(
    models: &Schedule<BranchingModel>,
    ops: &Schedule<MomentOperators>,
    obs: &ObservationModel,
    initial: &InitialState,
    ys: &[Vec<f64>],
    opts: &PfOptions,
    policy: &SwitchPolicy,
    master: &mut ChaCha8Rng,
) -> Result<FilterTrace> {
    check_pf_inputs(models, obs, initial, ys, opts)?;
    ops.check_covers(ys.len())?;
    let counters = models.get(1)?.counter_types().to_vec();
    let density = obs.log_density();

    let mut last_mean = initial.mean();
    let mut state = if in_gaussian_regime(&last_mean, &counters, policy) {
        let mut b = initial.belief();
        b.reset(&ops.get(1)?.counter_types);
        Representation::Belief(b)
    } else {
        Representation::Particles(initial_ensemble(initial, opts.n, master)?)
    };

    let mut trace = FilterTrace::new();
    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        obs.check_y(y)?;
        let gaussian = in_gaussian_regime(&last_mean, &counters, policy);
        state = match (state, gaussian) {
            (Representation::Particles(ens), true) => {
                let mut b = moments_from_particles(&ens)?;
                b.reset(&counters);
                Representation::Belief(b)
            }
            (Representation::Belief(b), false) => {
                Representation::Particles(particles_from_gaussian(&b, opts.n, master)?)
            }
            (s, _) => s,
        };
        let (step, next, aborted) = match &state {
            Representation::Belief(b) => {
                let prop = ops.get(t)?;
                let out = gaussian_step(b, prop, obs, y, t)?;
                let status = TraceStatus::AbortedNegativeMean { step: t };
                (out.step, Representation::Belief(out.next), out.aborted.then_some(status))
            }
            Representation::Particles(ens) => {
                let dens = density.as_ref().map_err(Clone::clone)?;
                let out = particle_step(ens, models.get(t)?, dens, y, t, opts, master)?;
                let status = TraceStatus::AbortedZeroWeights { step: t };
                (out.step, Representation::Particles(out.next), out.aborted.then_some(status))
            }
        };
        last_mean = step.filtered.mean.clone();
        trace.push(step);
        if let Some(status) = aborted {
            trace.status = status;
            break;
        }
        state = next;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn policy(s: f64) -> SwitchPolicy {
        SwitchPolicy::new(s).unwrap()
    }

    #[test]
    fn threshold_membership() {
        assert!(in_gaussian_regime(&[11.0, 12.0, 10.0], &[], &policy(10.0)));
        assert!(!in_gaussian_regime(&[5.0, 20.0, 3.0], &[], &policy(10.0)));
        assert!(in_gaussian_regime(&[0.0, 3.0], &[], &policy(0.0)));
        assert!(in_gaussian_regime(&[12.0, 11.0, 0.0], &[2], &policy(10.0)));
        let literal = SwitchPolicy {
            include_counters: true,
            ..policy(10.0)
        };
        assert!(!in_gaussian_regime(&[12.0, 11.0, 0.0], &[2], &literal));
        assert!(!in_gaussian_regime(&[1e9], &[], &policy(f64::INFINITY)));
        assert!(SwitchPolicy::new(-1.0).is_err());
    }

    #[test]
    fn two_point_moments() {
        let ens = Ensemble::uniform(vec![StateVector(vec![1, 2]), StateVector(vec![3, 4])]);
        let b = moments_from_particles(&ens).unwrap();
        assert_eq!(b.mean, vec![2.0, 3.0]);
        assert_eq!(b.cov.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        let same = Ensemble::uniform(vec![StateVector(vec![4, 4]); 5]);
        assert_eq!(moments_from_particles(&same).unwrap().cov.max_abs(), 0.0);
        let one = Ensemble::uniform(vec![StateVector(vec![1])]);
        assert!(matches!(moments_from_particles(&one), Err(Error::DegenerateEnsemble(_))));
    }

    #[test]
    fn rounding_and_censoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = GaussianBelief::point_mass(&[3.4, 0.2]);
        let ens = particles_from_gaussian(&b, 10, &mut rng).unwrap();
        assert!(ens.particles.iter().all(|z| z.0 == vec![3, 0]));
        let b = GaussianBelief::point_mass(&[-5.0, 10.0]);
        let ens = particles_from_gaussian(&b, 10, &mut rng).unwrap();
        assert!(ens.particles.iter().all(|z| z.0 == vec![0, 10]));
        let b = GaussianBelief::point_mass(&[2.5, 0.5]);
        let ens = particles_from_gaussian(&b, 1, &mut rng).unwrap();
        assert_eq!(ens.particles[0].0, vec![3, 1]);
    }
}
