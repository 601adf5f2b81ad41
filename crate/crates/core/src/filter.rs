//! Types shared by the Gaussian, particle and hybrid filters.

use crate::branching::StateVector;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean and covariance of the hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    pub cov: DenseMatrix,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, cov: DenseMatrix) -> Result<Self> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("non-finite belief mean".into()));
        }
        Ok(Self { mean, cov })
    }

    /// Zero-covariance belief at `z`.
    pub fn point_mass(z: &[f64]) -> Self {
        Self {
            mean: z.to_vec(),
            cov: DenseMatrix::zeros(z.len(), z.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Zero the mean and the covariance row and column of each listed type.
    pub fn reset(&mut self, types: &[usize]) {
        for &c in types {
            self.mean[c] = 0.0;
            self.cov.zero_row_col(c);
        }
    }
}

/// Linear Gaussian observation `y = H z + ε`, `ε ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub h: DenseMatrix,
    pub r: DenseMatrix,
}

impl ObservationModel {
    pub fn new(h: DenseMatrix, r: DenseMatrix) -> Result<Self> {
        let d = h.rows();
        if r.rows() != d || r.cols() != d {
            return Err(Error::Dimension(format!(
                "{d}-dimensional observation with a {}x{} noise covariance",
                r.rows(),
                r.cols()
            )));
        }
        if r.asymmetry() > 1e-10 * r.max_abs().max(1.0) {
            return Err(Error::InvalidInput("noise covariance is not symmetric".into()));
        }
        if r.diagonal().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidInput("noise covariance has a negative variance".into()));
        }
        Ok(Self { h, r })
    }

    /// Observation dimension `d`.
    pub fn obs_dim(&self) -> usize {
        self.h.rows()
    }

    /// State dimension `r`.
    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }

    pub(crate) fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.obs_dim() {
            return Err(Error::Dimension(format!(
                "observation of length {} for a {}-dimensional model",
                y.len(),
                self.obs_dim()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(())
    }

    /// Precomputed `log φ(y; H z, R)` as a function of `z`.
    ///
    /// An exactly zero `R` is treated as an exact observation: the log weight
    /// is 0 when `H z = y` and −∞ otherwise.
    pub fn log_density(&self) -> Result<ObsDensity> {
        if self.r.max_abs() == 0.0 {
            return Ok(ObsDensity {
                h: self.h.clone(),
                chol: None,
                norm: 0.0,
            });
        }
        let chol = Cholesky::new(&self.r).map_err(|_| {
            Error::Unsupported(
                "particle weights need a positive definite or exactly zero noise covariance"
                    .into(),
            )
        })?;
        let norm = -0.5 * (self.obs_dim() as f64 * LN_2PI + chol.logdet());
        Ok(ObsDensity {
            h: self.h.clone(),
            chol: Some(chol),
            norm,
        })
    }
}

/// Observation log density prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct ObsDensity {
    h: DenseMatrix,
    chol: Option<Cholesky>,
    norm: f64,
}

impl ObsDensity {
    /// Upper bound of [`ObsDensity::eval`] over all `z` and `y`.
    pub fn max_log_density(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, z: &[f64], y: &[f64]) -> f64 {
        let d = self.h.rows();
        let mut e = vec![0.0; d];
        for (i, ei) in e.iter_mut().enumerate() {
            let hz: f64 = self.h.row(i).iter().zip(z).map(|(h, z)| h * z).sum();
            *ei = y[i] - hz;
        }
        match &self.chol {
            Some(ch) => self.norm - 0.5 * ch.inv_quad(&e),
            None => {
                let exact = e
                    .iter()
                    .zip(y)
                    .all(|(ei, yi)| ei.abs() <= 1e-9 * yi.abs().max(1.0));
                if exact {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `log φ(x; m, S)` for a multivariate normal with Cholesky factor of `S`.
pub(crate) fn log_normal_pdf(x: &[f64], m: &[f64], chol: &Cholesky) -> f64 {
    let e: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
    -0.5 * (x.len() as f64 * LN_2PI + chol.logdet() + chol.inv_quad(&e))
}

/// Assigns a per-window item (operators, models) to each 1-based time step.
#[derive(Debug, Clone)]
pub struct Schedule<T> {
    items: Vec<T>,
    assignment: Option<Vec<usize>>,
}

impl<T> Schedule<T> {
    /// The same item at every step.
    pub fn constant(item: T) -> Self {
        Self {
            items: vec![item],
            assignment: None,
        }
    }

    /// Consecutive windows: item `k` covers the next `lengths[k]` steps.
    pub fn windows(items: Vec<T>, lengths: &[usize]) -> Result<Self> {
        if items.len() != lengths.len() || items.is_empty() {
            return Err(Error::Config(format!(
                "{} window items for {} window lengths",
                items.len(),
                lengths.len()
            )));
        }
        if lengths.iter().any(|l| *l == 0) {
            return Err(Error::Config("empty parameter window".into()));
        }
        let assignment = lengths
            .iter()
            .enumerate()
            .flat_map(|(k, l)| std::iter::repeat_n(k, *l))
            .collect();
        Ok(Self {
            items,
            assignment: Some(assignment),
        })
    }

    /// Item in force during step `t` (1-based).
    pub fn get(&self, t: usize) -> Result<&T> {
        match &self.assignment {
            None => Ok(&self.items[0]),
            Some(a) => t
                .checked_sub(1)
                .and_then(|i| a.get(i))
                .map(|k| &self.items[*k])
                .ok_or_else(|| Error::InvalidInput(format!("step {t} outside the schedule"))),
        }
    }

    /// Number of steps covered, or `None` for a constant schedule.
    pub fn horizon(&self) -> Option<usize> {
        self.assignment.as_ref().map(Vec::len)
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub(crate) fn check_covers(&self, steps: usize) -> Result<()> {
        match self.horizon() {
            Some(h) if h < steps => Err(Error::InvalidInput(format!(
                "schedule covers {h} steps but the series has {steps}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Which engine produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineTag {
    Gaussian,
    Particle,
}

impl EngineTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineTag::Gaussian => "gaussian",
            EngineTag::Particle => "particle",
        }
    }
}

/// How a filter run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStatus {
    Completed,
    /// A filtered mean coordinate went negative at this 1-based step.
    AbortedNegativeMean { step: usize },
    /// Every particle weight was zero at this 1-based step.
    AbortedZeroWeights { step: usize },
}

impl TraceStatus {
    pub fn is_completed(self) -> bool {
        self == TraceStatus::Completed
    }
}

/// One filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    /// 1-based step index.
    pub t: usize,
    pub engine: EngineTag,
    /// Predictive moments before the observation at `t` (for particle steps,
    /// moments of the propagated, unweighted ensemble).
    pub predicted: GaussianBelief,
    /// Filtering moments after the observation at `t`, before counter reset.
    pub filtered: GaussianBelief,
    /// `log p(y_t | y_{1:t-1})`, −∞ on the aborting step.
    pub loglik: f64,
    /// Post-resampling particle states, kept on request for particle steps.
    pub particles: Option<Vec<Vec<f64>>>,
}

/// Output of a filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub steps: Vec<FilterStep>,
    pub total_loglik: f64,
    pub status: TraceStatus,
}

impl FilterTrace {
    pub(crate) fn new() -> Self {
        Self {
            steps: Vec::new(),
            total_loglik: 0.0,
            status: TraceStatus::Completed,
        }
    }

    pub(crate) fn push(&mut self, step: FilterStep) {
        self.total_loglik += step.loglik;
        self.steps.push(step);
    }

    /// Steps run by the given engine.
    pub fn steps_by(&self, engine: EngineTag) -> impl Iterator<Item = &FilterStep> {
        self.steps.iter().filter(move |s| s.engine == engine)
    }
}

/// Initial condition shared by all engines.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(StateVector),
    Gaussian(GaussianBelief),
}

impl InitialState {
    pub fn dim(&self) -> usize {
        match self {
            InitialState::Fixed(z) => z.len(),
            InitialState::Gaussian(b) => b.dim(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            InitialState::Fixed(z) => z.to_f64(),
            InitialState::Gaussian(b) => b.mean.clone(),
        }
    }

    pub fn belief(&self) -> GaussianBelief {
        match self {
            InitialState::Fixed(z) => GaussianBelief::point_mass(&z.to_f64()),
            InitialState::Gaussian(b) => b.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_windows() {
        let s = Schedule::windows(vec!['a', 'b'], &[2, 1]).unwrap();
        assert_eq!(*s.get(1).unwrap(), 'a');
        assert_eq!(*s.get(2).unwrap(), 'a');
        assert_eq!(*s.get(3).unwrap(), 'b');
        assert!(s.get(4).is_err());
        assert!(s.get(0).is_err());
        assert!(Schedule::windows(vec!['a'], &[0]).is_err());
        assert_eq!(*Schedule::constant(7).get(1000).unwrap(), 7);
    }

    #[test]
    fn observation_density() {
        let obs = ObservationModel::new(
            DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap(),
            DenseMatrix::from_rows(&[[1.0]]).unwrap(),
        )
        .unwrap();
        let dens = obs.log_density().unwrap();
        assert!((dens.eval(&[5.0, 2.0], &[2.0]) + 0.918_938_533_204_672_7).abs() < 1e-15);

        let exact = ObservationModel::new(
            DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap(),
            DenseMatrix::zeros(1, 1),
        )
        .unwrap();
        let dens = exact.log_density().unwrap();
        assert_eq!(dens.eval(&[5.0, 2.0], &[2.0]), 0.0);
        assert_eq!(dens.eval(&[5.0, 3.0], &[2.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn belief_reset() {
        let mut b = GaussianBelief::new(
            vec![1.0, 2.0],
            DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap(),
        )
        .unwrap();
        b.reset(&[1]);
        assert_eq!(b.mean, vec![1.0, 0.0]);
        assert_eq!(b.cov.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
    }
}
