//! Posterior predictive simulation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::branching::{advance, BranchingModel, StateVector};
use crate::error::{Error, Result};
use crate::filter::{ObservationModel, Schedule};
use crate::linalg::psd_sqrt;

/// Simulate `reps` observation paths of length `steps`.
///
/// Each replicate draws a parameter row uniformly from `samples`, builds the
/// per-step models with `build`, draws an initial state with `z0`, and then
/// simulates unit steps (resetting counters first) and noisy observations
/// `y = H z + ε`. Returns `reps × steps × d` values.
pub fn posterior_predictive<B, Z>(
    mut build: B,
    obs: &ObservationModel,
    samples: &[Vec<f64>],
    mut z0: Z,
    steps: usize,
    reps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Vec<f64>>>>
where
    B: FnMut(&[f64]) -> Result<Schedule<BranchingModel>>,
    Z: FnMut(&[f64], &mut ChaCha8Rng) -> StateVector,
{
    if samples.is_empty() {
        return Err(Error::InvalidInput("no posterior samples".into()));
    }
    let noise = psd_sqrt(&obs.r)?;
    let d = obs.obs_dim();
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let theta = &samples[rng.random_range(0..samples.len())];
        let models = build(theta)?;
        models.check_covers(steps)?;
        let mut z = z0(theta, rng);
        let mut path = Vec::with_capacity(steps);
        for t in 1..=steps {
            let model = models.get(t)?;
            z.reset(model.counter_types());
            advance(model, &mut z, 1.0, rng);
            let zf = z.to_f64();
            let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let y = (0..d)
                .map(|i| {
                    let hz: f64 = obs.h.row(i).iter().zip(&zf).map(|(h, v)| h * v).sum();
                    hz + (0..d).map(|k| noise[(i, k)] * eps[k]).sum::<f64>()
                })
                .collect();
            path.push(y);
        }
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use rand::SeedableRng;

    #[test]
    fn frozen_model_gives_constant_paths() {
        let model = BranchingModel::new(vec![0.0; 2], vec![vec![]; 2], vec![0.0; 2], vec![]).unwrap();
        let obs = ObservationModel::new(DenseMatrix::from_rows(&[[1.0, 1.0]]).unwrap(), DenseMatrix::zeros(1, 1))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = posterior_predictive(
            |_| Ok(Schedule::constant(model.clone())),
            &obs,
            &[vec![1.0]],
            |_, _| StateVector(vec![2, 5]),
            6,
            3,
            &mut rng,
        )
        .unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().flatten().all(|y| y == &vec![7.0]));
    }
}
