//! Adaptive random-walk Metropolis-Hastings.
//!
//! Proposals are Gaussian steps on the sampling scale. During burn-in the
//! proposal covariance is replaced every `adapt_window` steps by
//! `scale · Cov(last adapt_window states)`; afterwards it is frozen. The
//! likelihood may be a noisy unbiased estimate (pseudo-marginal), in which
//! case the current state's estimate is reused until a proposal is accepted.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::prior::{log_prior_values, to_natural, ParameterVector, PriorSpec};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};

/// Sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    pub steps: usize,
    pub burn_in: usize,
    /// Adaptation period and window length.
    pub adapt_window: usize,
    /// Multiplier on the empirical covariance; `None` means `2.38² / dim`.
    pub scale: Option<f64>,
    /// Proposal covariance before the first adaptation; `None` means
    /// `0.01 · I`.
    pub initial_proposal: Option<DenseMatrix>,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            steps: 81_920,
            burn_in: 20_480,
            adapt_window: 4_096,
            scale: None,
            initial_proposal: None,
            seed: 0,
        }
    }
}

impl MhConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::Config(format!(
                "steps ({}) must exceed burn-in ({})",
                self.steps, self.burn_in
            )));
        }
        if self.adapt_window < 2 || self.burn_in < self.adapt_window {
            return Err(Error::Config(format!(
                "adaptation window {} must be at least 2 and at most the burn-in {}",
                self.adapt_window, self.burn_in
            )));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("proposal scale {s} must be positive")));
            }
        }
        if let Some(p) = &self.initial_proposal {
            if p.rows() != dim || p.cols() != dim {
                return Err(Error::Dimension("initial proposal covariance has the wrong size".into()));
            }
        }
        Ok(())
    }

    pub fn effective_scale(&self, dim: usize) -> f64 {
        self.scale.unwrap_or(2.38 * 2.38 / dim as f64)
    }
}

/// Sampler output after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub names: Vec<String>,
    /// Post-burn-in states on the natural scale, one row per step.
    pub samples: Vec<Vec<f64>>,
    /// Log likelihood of each retained state.
    pub logliks: Vec<f64>,
    /// Whether the move into each retained state was an accepted proposal.
    pub accepted: Vec<bool>,
    /// `(step, covariance)` for the initial proposal and each adaptation.
    pub proposal_history: Vec<(usize, DenseMatrix)>,
    pub burn_in: usize,
    pub total_steps: usize,
    /// Acceptance rate over all steps including burn-in.
    pub overall_acceptance: f64,
}

impl ChainTrace {
    /// Acceptance rate after burn-in.
    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len() as f64
    }

    /// Retained samples of one coordinate.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }
}

/// Sample covariance (denominator `n - 1`) of the rows.
pub fn empirical_covariance(rows: &[Vec<f64>]) -> DenseMatrix {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DenseMatrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    cov.scale(1.0 / (n as f64 - 1.0))
}

/// `scale · Cov(window)`, or `None` if that is not positive definite.
pub fn adapted_proposal(window: &[Vec<f64>], scale: f64) -> Option<DenseMatrix> {
    if window.len() < 2 {
        return None;
    }
    let cov = empirical_covariance(window).scale(scale);
    Cholesky::new(&cov).ok().map(|_| cov)
}

/// Run the sampler.
///
/// `loglik` receives natural-scale parameters and returns a log likelihood;
/// −∞ marks an impossible state and NaN is an error. Proposals outside the
/// prior support are rejected without calling `loglik`.
pub fn mh_run<L>(
    mut loglik: L,
    prior: &PriorSpec,
    init: &ParameterVector,
    config: &MhConfig,
) -> Result<ChainTrace>
where
    L: FnMut(&[f64]) -> f64,
{
    mh_run_bounded(|theta, _| loglik(theta), prior, init, config)
}

/// [`mh_run`] with early rejection.
///
/// The uniform for each step is drawn before the likelihood is evaluated,
/// so the value a proposal must beat is known in advance. `loglik` receives
/// it as a second argument and may return anything at or below it (such as
/// −∞) once the estimate is certain to fall short. Acceptance decisions are
/// unchanged. The initial point is evaluated with a bound of −∞.
pub fn mh_run_bounded<L>(
    mut loglik: L,
    prior: &PriorSpec,
    init: &ParameterVector,
    config: &MhConfig,
) -> Result<ChainTrace>
where
    L: FnMut(&[f64], f64) -> f64,
{
    let dim = init.dim();
    config.validate(dim)?;
    prior.check(dim)?;
    let transforms = &init.transforms;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut current = init.values.clone();
    let mut current_lp = log_prior_values(transforms, &current, prior);
    let mut current_ll = loglik(&init.natural(), f64::NEG_INFINITY);
    if current_ll.is_nan() {
        return Err(Error::Numerical("likelihood returned NaN at the initial point".into()));
    }
    if !(current_lp + current_ll).is_finite() {
        return Err(Error::InvalidInput(format!(
            "initial point {:?} has zero posterior density",
            init.natural()
        )));
    }

    let mut proposal = config
        .initial_proposal
        .clone()
        .unwrap_or_else(|| DenseMatrix::identity(dim).scale(0.01));
    let mut root = Cholesky::new(&proposal)
        .map_err(|_| Error::Config("initial proposal covariance must be positive definite".into()))?;
    let mut history = vec![(0, proposal.clone())];
    let scale = config.effective_scale(dim);

    let kept = config.steps - config.burn_in;
    let mut samples = Vec::with_capacity(kept);
    let mut logliks = Vec::with_capacity(kept);
    let mut accepted_flags = Vec::with_capacity(kept);
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(config.adapt_window);
    let mut total_accepted = 0usize;
    let mut eps = vec![0.0; dim];

    for step in 1..=config.steps {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let l = root.factor();
        let candidate: Vec<f64> = (0..dim)
            .map(|i| current[i] + (0..=i).map(|k| l[(i, k)] * eps[k]).sum::<f64>())
            .collect();
        let u: f64 = rng.random();
        let cand_lp = log_prior_values(transforms, &candidate, prior);
        let mut accepted = false;
        if cand_lp > f64::NEG_INFINITY {
            let needed = u.ln() + current_lp + current_ll - cand_lp;
            let cand_ll = loglik(&to_natural(transforms, &candidate), needed);
            if cand_ll.is_nan() {
                return Err(Error::Numerical(format!(
                    "likelihood returned NaN at {:?}",
                    to_natural(transforms, &candidate)
                )));
            }
            if cand_ll > f64::NEG_INFINITY {
                let log_ratio = (cand_lp + cand_ll) - (current_lp + current_ll);
                if u.ln() < log_ratio {
                    current = candidate;
                    current_lp = cand_lp;
                    current_ll = cand_ll;
                    accepted = true;
                    total_accepted += 1;
                }
            }
        }

        if step <= config.burn_in {
            if window.len() == config.adapt_window {
                window.pop_front();
            }
            window.push_back(current.clone());
            if step % config.adapt_window == 0 {
                proposal = match adapted_proposal(window.make_contiguous(), scale) {
                    Some(p) => p,
                    None => proposal.scale(0.25),
                };
                root = Cholesky::new(&proposal)?;
                history.push((step, proposal.clone()));
            }
        } else {
            samples.push(to_natural(transforms, &current));
            logliks.push(current_ll);
            accepted_flags.push(accepted);
        }
    }

    Ok(ChainTrace {
        names: init.names.clone(),
        samples,
        logliks,
        accepted: accepted_flags,
        proposal_history: history,
        burn_in: config.burn_in,
        total_steps: config.steps,
        overall_acceptance: total_accepted as f64 / config.steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::prior::{PriorComponent, Transform};

    fn scalar(x: f64) -> ParameterVector {
        ParameterVector::from_natural(vec!["x".into()], vec![Transform::Identity], &[x]).unwrap()
    }

    fn short(seed: u64) -> MhConfig {
        MhConfig {
            steps: 3000,
            burn_in: 1000,
            adapt_window: 500,
            seed,
            ..MhConfig::default()
        }
    }

    #[test]
    fn adapted_proposal_is_scaled_window_covariance() {
        let window: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let p = adapted_proposal(&window, 2.5).unwrap();
        assert_eq!(p, empirical_covariance(&window).scale(2.5));
        let var0: f64 = {
            let m = 4.5;
            (0..10).map(|i| (i as f64 - m).powi(2)).sum::<f64>() / 9.0
        };
        assert!((p[(0, 0)] - 2.5 * var0).abs() < 1e-12);
        assert!(adapted_proposal(&vec![vec![1.0, 1.0]; 5], 1.0).is_none());
    }

    #[test]
    fn adaptation_stops_after_burn_in() {
        let trace = mh_run(|x| -0.5 * x[0] * x[0], &PriorSpec::default(), &scalar(0.0), &short(1)).unwrap();
        let steps: Vec<usize> = trace.proposal_history.iter().map(|(s, _)| *s).collect();
        assert_eq!(steps, vec![0, 500, 1000]);
        assert_eq!(trace.samples.len(), 2000);
    }

    #[test]
    fn impossible_states_are_never_entered() {
        let ll = |x: &[f64]| if x[0] > 1.0 { f64::NEG_INFINITY } else { -0.5 * x[0] * x[0] };
        let trace = mh_run(ll, &PriorSpec::default(), &scalar(0.0), &short(2)).unwrap();
        assert!(trace.samples.iter().all(|s| s[0] <= 1.0));
        assert!(trace.logliks.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn nan_likelihood_is_an_error() {
        let ll = |x: &[f64]| if x[0] > 0.05 { f64::NAN } else { 0.0 };
        let res = mh_run(ll, &PriorSpec::default(), &scalar(0.0), &short(3));
        assert!(matches!(res, Err(Error::Numerical(_))));
    }

    #[test]
    fn prior_support_rejects_without_likelihood_call() {
        let prior = PriorSpec::new(vec![PriorComponent::gamma(0, 2.0, 1.0).unwrap()]);
        let mut calls_outside = 0;
        let trace = mh_run(
            |x| {
                if x[0] <= 0.0 {
                    calls_outside += 1;
                }
                0.0
            },
            &prior,
            &scalar(0.05),
            &short(4),
        )
        .unwrap();
        assert_eq!(calls_outside, 0);
        assert!(trace.samples.iter().all(|s| s[0] > 0.0));
    }

    #[test]
    fn same_seed_same_chain() {
        let run = |seed| mh_run(|x| -0.5 * x[0] * x[0], &PriorSpec::default(), &scalar(0.3), &short(seed)).unwrap();
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).samples, run(10).samples);
    }

    #[test]
    fn zero_posterior_start_is_rejected() {
        let prior = PriorSpec::new(vec![PriorComponent::gamma(0, 2.0, 1.0).unwrap()]);
        assert!(mh_run(|_| 0.0, &prior, &scalar(-1.0), &short(1)).is_err());
    }

    #[test]
    fn early_rejection_keeps_the_chain() {
        let target = |x: &[f64]| -0.5 * x[0] * x[0];
        let plain = mh_run(target, &PriorSpec::default(), &scalar(0.3), &short(4)).unwrap();
        let mut cut = 0;
        let bounded = mh_run_bounded(
            |x, needed| {
                let ll = target(x);
                if ll < needed {
                    cut += 1;
                    f64::NEG_INFINITY
                } else {
                    ll
                }
            },
            &PriorSpec::default(),
            &scalar(0.3),
            &short(4),
        )
        .unwrap();
        assert_eq!(plain.samples, bounded.samples);
        assert_eq!(plain.accepted, bounded.accepted);
        assert!(cut > 0);
    }
}
