//! Gaussian moment-matching filter and Rauch-Tung-Striebel smoother.

use crate::branching::MomentOperators;
use crate::error::{Error, Result};
use crate::filter::{
    log_normal_pdf, EngineTag, FilterStep, FilterTrace, GaussianBelief, ObservationModel,
    Schedule, TraceStatus,
};
use crate::linalg::{clamp_psd, is_psd, pinv_sym, Cholesky, DenseMatrix};

/// Relative tolerance used to decide whether a covariance needs repair.
const PSD_TOL: f64 = 1e-10;

/// Filtered means below `-NEG_MEAN_TOL · (1 + max|μ|)` abort the run.
pub const NEG_MEAN_TOL: f64 = 1e-9;

/// One-step moment propagation.
pub trait Propagate {
    fn dim(&self) -> usize;

    /// Linear map from the current state to the next mean (row-vector
    /// convention: `μ' = μ F`).
    fn mean_operator(&self) -> &DenseMatrix;

    /// Coordinates reset to zero at the start of each step.
    fn counter_types(&self) -> &[usize];

    fn predict(&self, belief: &GaussianBelief) -> Result<GaussianBelief>;
}

impl Propagate for MomentOperators {
    fn dim(&self) -> usize {
        self.f.rows()
    }

    fn mean_operator(&self) -> &DenseMatrix {
        &self.f
    }

    fn counter_types(&self) -> &[usize] {
        &self.counter_types
    }

    /// `μ' = μ F`, `Σ' = Σ_i μ_i V_i + Fᵀ Σ F`.
    fn predict(&self, belief: &GaussianBelief) -> Result<GaussianBelief> {
        check_dim(belief, self.dim())?;
        let mean = self.f.left_mul_vec(&belief.mean)?;
        let mut cov = quad_form(&self.f, &belief.cov);
        for (mi, vi) in belief.mean.iter().zip(&self.v) {
            if *mi != 0.0 {
                cov.add_scaled(*mi, vi);
            }
        }
        cov.symmetrize_in_place();
        Ok(GaussianBelief { mean, cov })
    }
}

/// Linear-Gaussian transition `x' = x F + ε`, `ε ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub f: DenseMatrix,
    pub q: DenseMatrix,
}

impl LinearGaussian {
    pub fn new(f: DenseMatrix, q: DenseMatrix) -> Result<Self> {
        if !f.is_square() || q.rows() != f.rows() || q.cols() != f.rows() {
            return Err(Error::Dimension("transition and noise must be square and match".into()));
        }
        Ok(Self { f, q })
    }
}

impl Propagate for LinearGaussian {
    fn dim(&self) -> usize {
        self.f.rows()
    }

    fn mean_operator(&self) -> &DenseMatrix {
        &self.f
    }

    fn counter_types(&self) -> &[usize] {
        &[]
    }

    fn predict(&self, belief: &GaussianBelief) -> Result<GaussianBelief> {
        check_dim(belief, self.dim())?;
        let mean = self.f.left_mul_vec(&belief.mean)?;
        let mut cov = quad_form(&self.f, &belief.cov);
        cov.add_scaled(1.0, &self.q);
        cov.symmetrize_in_place();
        Ok(GaussianBelief { mean, cov })
    }
}

fn check_dim(belief: &GaussianBelief, r: usize) -> Result<()> {
    if belief.dim() != r {
        return Err(Error::Dimension(format!(
            "belief of dimension {} for {r}-dimensional dynamics",
            belief.dim()
        )));
    }
    Ok(())
}

/// `Fᵀ Σ F`.
fn quad_form(f: &DenseMatrix, sigma: &DenseMatrix) -> DenseMatrix {
    &(&f.transpose() * sigma) * f
}

/// Symmetrize, and clamp negative eigenvalues only if the matrix is not
/// already PSD to tolerance.
fn repair(mut cov: DenseMatrix) -> Result<DenseMatrix> {
    cov.symmetrize_in_place();
    if is_psd(&cov, PSD_TOL) {
        return Ok(cov);
    }
    Ok(clamp_psd(&cov)?.0)
}

/// Kalman update. Returns the filtered belief and `log φ(y; Hμ, HΣHᵀ + R)`.
pub fn update(
    belief: &GaussianBelief,
    y: &[f64],
    obs: &ObservationModel,
) -> Result<(GaussianBelief, f64)> {
    obs.check_y(y)?;
    check_dim(belief, obs.state_dim())?;
    let h = &obs.h;
    let hs = h * &belief.cov;
    let mut s = &(&hs * &h.transpose()) + &obs.r;
    s.symmetrize_in_place();
    let chol = Cholesky::new(&s)?;
    let predicted_y = h.mul_vec(&belief.mean)?;
    let loglik = log_normal_pdf(y, &predicted_y, &chol);

    // Kᵀ = S⁻¹ H Σ.
    let k_t = chol.solve(&hs)?;
    let innovation: Vec<f64> = y.iter().zip(&predicted_y).map(|(a, b)| a - b).collect();
    let shift = k_t.left_mul_vec(&innovation)?;
    let mean: Vec<f64> = belief.mean.iter().zip(&shift).map(|(m, d)| m + d).collect();

    let joseph = obs.r.diagonal().iter().any(|v| *v == 0.0);
    let cov = if joseph {
        let k = k_t.transpose();
        let a = &DenseMatrix::identity(belief.dim()) - &(&k * h);
        let mut c = &(&a * &belief.cov) * &a.transpose();
        c.add_scaled(1.0, &(&(&k * &obs.r) * &k_t));
        c
    } else {
        let mut c = belief.cov.clone();
        c.add_scaled(-1.0, &(&k_t.transpose() * &hs));
        c
    };
    Ok((
        GaussianBelief {
            mean,
            cov: repair(cov)?,
        },
        loglik,
    ))
}

/// True when some non-counter coordinate of `mean` is negative beyond
/// rounding noise. Counters are zeroed before the next predict and never feed
/// the variance, so observation noise may push them below zero harmlessly.
pub fn has_negative_mean(mean: &[f64], counter_types: &[usize]) -> bool {
    let scale = 1.0 + mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    mean.iter()
        .enumerate()
        .any(|(i, v)| *v < -NEG_MEAN_TOL * scale && !counter_types.contains(&i))
}

/// Result of one predict/update cycle.
#[derive(Debug, Clone)]
pub struct GaussianStepOutcome {
    pub step: FilterStep,
    /// Filtered belief with counters reset, ready for the next predict.
    pub next: GaussianBelief,
    pub aborted: bool,
}

/// Predict from `belief` (counters already reset) and update on `y`.
pub fn gaussian_step<P: Propagate>(
    belief: &GaussianBelief,
    prop: &P,
    obs: &ObservationModel,
    y: &[f64],
    t: usize,
) -> Result<GaussianStepOutcome> {
    let predicted = prop.predict(belief)?;
    let (filtered, mut loglik) = update(&predicted, y, obs)?;
    let aborted = has_negative_mean(&filtered.mean, prop.counter_types());
    if aborted {
        loglik = f64::NEG_INFINITY;
    }
    let mut next = filtered.clone();
    next.reset(prop.counter_types());
    Ok(GaussianStepOutcome {
        step: FilterStep {
            t,
            engine: EngineTag::Gaussian,
            predicted,
            filtered,
            loglik,
            particles: None,
        },
        next,
        aborted,
    })
}

pub(crate) fn check_series(ys: &[Vec<f64>]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::InvalidInput("empty observation series".into()));
    }
    Ok(())
}

/// Run the Gaussian filter over `ys`; step `t` uses `schedule.get(t)`.
///
/// If a filtered mean goes negative the run stops, the offending step is
/// recorded with increment −∞ and the total is −∞.
pub fn run_gaussian_filter<P: Propagate>(
    schedule: &Schedule<P>,
    obs: &ObservationModel,
    initial: &GaussianBelief,
    ys: &[Vec<f64>],
) -> Result<FilterTrace> {
    check_series(ys)?;
    schedule.check_covers(ys.len())?;
    let mut belief = initial.clone();
    belief.reset(schedule.get(1)?.counter_types());
    let mut trace = FilterTrace::new();
    for (i, y) in ys.iter().enumerate() {
        let t = i + 1;
        let out = gaussian_step(&belief, schedule.get(t)?, obs, y, t)?;
        trace.push(out.step);
        if out.aborted {
            trace.status = TraceStatus::AbortedNegativeMean { step: t };
            break;
        }
        belief = out.next;
    }
    Ok(trace)
}

/// Marginal log likelihood from the Gaussian filter without keeping a trace.
pub fn gaussian_loglik<P: Propagate>(
    schedule: &Schedule<P>,
    obs: &ObservationModel,
    initial: &GaussianBelief,
    ys: &[Vec<f64>],
) -> Result<f64> {
    check_series(ys)?;
    schedule.check_covers(ys.len())?;
    let mut belief = initial.clone();
    belief.reset(schedule.get(1)?.counter_types());
    let mut total = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let prop = schedule.get(i + 1)?;
        let predicted = prop.predict(&belief)?;
        let (mut filtered, loglik) = update(&predicted, y, obs)?;
        if has_negative_mean(&filtered.mean, prop.counter_types()) {
            return Ok(f64::NEG_INFINITY);
        }
        total += loglik;
        filtered.reset(prop.counter_types());
        belief = filtered;
    }
    Ok(total)
}

/// Fixed-interval smoother over a completed Gaussian trace.
///
/// Counter reset enters through the cross-covariance
/// `Cov(z_t, z_{t+1} | y_{1:t}) = Σ_{t|t} D F`, where `D` zeroes the counter
/// coordinates, so the gain is `Σ_{t|t} D F Σ_{t+1|t}⁻¹`.
pub fn rts_smooth<P: Propagate>(
    trace: &FilterTrace,
    schedule: &Schedule<P>,
) -> Result<Vec<GaussianBelief>> {
    if trace.steps.iter().any(|s| s.engine != EngineTag::Gaussian) {
        return Err(Error::Unsupported(
            "smoothing needs a trace produced entirely by the Gaussian engine".into(),
        ));
    }
    if !trace.status.is_completed() || trace.steps.is_empty() {
        return Err(Error::InvalidInput("smoothing needs a completed, non-empty trace".into()));
    }
    let n = trace.steps.len();
    let mut smoothed = vec![trace.steps[n - 1].filtered.clone(); n];
    for i in (0..n - 1).rev() {
        let prop = schedule.get(i + 2)?;
        let filt = &trace.steps[i].filtered;
        let pred = &trace.steps[i + 1].predicted;

        let mut sigma_d = filt.cov.clone();
        for &c in prop.counter_types() {
            for row in 0..sigma_d.rows() {
                sigma_d[(row, c)] = 0.0;
            }
        }
        let cross = &sigma_d * prop.mean_operator();
        // Gᵀ = P⁻¹ Crossᵀ.
        let g_t = match Cholesky::new(&pred.cov) {
            Ok(ch) => ch.solve(&cross.transpose())?,
            Err(_) => &pinv_sym(&pred.cov, 1e-12)? * &cross.transpose(),
        };
        let g = g_t.transpose();

        let next = &smoothed[i + 1];
        let diff: Vec<f64> = next.mean.iter().zip(&pred.mean).map(|(a, b)| a - b).collect();
        let shift = g_t.left_mul_vec(&diff)?;
        let mean = filt.mean.iter().zip(&shift).map(|(m, d)| m + d).collect();
        let mut cov = filt.cov.clone();
        cov.add_scaled(1.0, &(&(&g * &(&next.cov - &pred.cov)) * &g_t));
        smoothed[i] = GaussianBelief {
            mean,
            cov: repair(cov)?,
        };
    }
    Ok(smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{compute_moment_operators, conditional_mean, conditional_var};
    use crate::models::{build_seir, SeirParams};

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn seir_ops() -> MomentOperators {
        let (model, _) = build_seir(&SeirParams::new(0.3, 0.375, 3.0 / 28.0, 0.75).unwrap()).unwrap();
        compute_moment_operators(&model, 1.0).unwrap()
    }

    #[test]
    fn predict_from_point_mass_matches_conditional_moments() {
        let ops = seir_ops();
        let z = [6.0, 0.0, 0.0];
        let pred = ops.predict(&GaussianBelief::point_mass(&z)).unwrap();
        assert_eq!(pred.mean, conditional_mean(&z, &ops).unwrap());
        assert_eq!(pred.cov, conditional_var(&z, &ops).unwrap());
    }

    #[test]
    fn identity_dynamics_leave_belief_unchanged() {
        let lg = LinearGaussian::new(DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)).unwrap();
        let b = GaussianBelief::new(vec![1.0, 2.0], m(&[&[2.0, 0.5], &[0.5, 1.0]])).unwrap();
        assert_eq!(lg.predict(&b).unwrap(), b);
    }

    #[test]
    fn exact_observation_collapses_belief() {
        let b = GaussianBelief::new(vec![1.0, 2.0], m(&[&[2.0, 0.5], &[0.5, 1.0]])).unwrap();
        let obs = ObservationModel::new(DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)).unwrap();
        let (post, _) = update(&b, &[3.0, 4.0], &obs).unwrap();
        assert!((post.mean[0] - 3.0).abs() < 1e-12 && (post.mean[1] - 4.0).abs() < 1e-12);
        assert!(post.cov.max_abs() < 1e-12);
    }

    #[test]
    fn standard_normal_at_mode() {
        let b = GaussianBelief::new(vec![2.0], m(&[&[0.5]])).unwrap();
        let obs = ObservationModel::new(m(&[&[1.0]]), m(&[&[0.5]])).unwrap();
        let (_, ll) = update(&b, &[2.0], &obs).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observation() {
        let b = GaussianBelief::new(vec![1.0, 2.0], m(&[&[2.0, 0.5], &[0.5, 1.0]])).unwrap();
        let obs = ObservationModel::new(DenseMatrix::zeros(1, 2), m(&[&[4.0]])).unwrap();
        let (post, ll) = update(&b, &[1.0], &obs).unwrap();
        assert_eq!(post, b);
        let expect = -0.5 * ((2.0 * std::f64::consts::PI * 4.0).ln() + 0.25);
        assert!((ll - expect).abs() < 1e-14);
    }

    #[test]
    fn nan_observation_is_rejected() {
        let b = GaussianBelief::point_mass(&[1.0]);
        let obs = ObservationModel::new(m(&[&[1.0]]), m(&[&[1.0]])).unwrap();
        assert!(matches!(update(&b, &[f64::NAN], &obs), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn singular_innovation_is_numerical_error() {
        let b = GaussianBelief::point_mass(&[1.0]);
        let obs = ObservationModel::new(m(&[&[1.0]]), m(&[&[0.0]])).unwrap();
        assert!(update(&b, &[1.0], &obs).unwrap_err().is_numerical());
    }

    #[test]
    fn single_step_with_zero_h() {
        let lg = LinearGaussian::new(DenseMatrix::identity(1), m(&[&[1.0]])).unwrap();
        let obs = ObservationModel::new(m(&[&[0.0]]), m(&[&[2.0]])).unwrap();
        let trace = run_gaussian_filter(
            &Schedule::constant(lg),
            &obs,
            &GaussianBelief::point_mass(&[3.0]),
            &[vec![1.5]],
        )
        .unwrap();
        let expect = -0.5 * ((2.0 * std::f64::consts::PI * 2.0).ln() + 1.5 * 1.5 / 2.0);
        assert!((trace.total_loglik - expect).abs() < 1e-14);
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn negative_mean_aborts_with_neg_infinity() {
        let lg = LinearGaussian::new(DenseMatrix::identity(2), DenseMatrix::identity(2)).unwrap();
        let obs = ObservationModel::new(DenseMatrix::identity(2), DenseMatrix::identity(2).scale(0.01))
            .unwrap();
        let ys = vec![vec![1.0, 1.0], vec![-50.0, 1.0], vec![1.0, 1.0]];
        let trace = run_gaussian_filter(
            &Schedule::constant(lg.clone()),
            &obs,
            &GaussianBelief::point_mass(&[1.0, 1.0]),
            &ys,
        )
        .unwrap();
        assert_eq!(trace.status, TraceStatus::AbortedNegativeMean { step: 2 });
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.total_loglik, f64::NEG_INFINITY);
        assert!(!trace.total_loglik.is_nan());
        let fast = gaussian_loglik(
            &Schedule::constant(lg),
            &obs,
            &GaussianBelief::point_mass(&[1.0, 1.0]),
            &ys,
        )
        .unwrap();
        assert_eq!(fast, f64::NEG_INFINITY);
    }

    #[test]
    fn negative_counter_mean_does_not_abort() {
        let obs = ObservationModel::new(m(&[&[0.0, 0.0, 1.0]]), m(&[&[1.0]])).unwrap();
        let ys = vec![vec![1.0], vec![-3.0], vec![2.0]];
        let trace = run_gaussian_filter(
            &Schedule::constant(seir_ops()),
            &obs,
            &GaussianBelief::point_mass(&[6.0, 0.0, 0.0]),
            &ys,
        )
        .unwrap();
        assert!(trace.steps[1].filtered.mean[2] < 0.0);
        assert_eq!(trace.status, TraceStatus::Completed);
        assert!(trace.total_loglik.is_finite());
    }

    #[test]
    fn counters_reset_between_steps() {
        let ops = seir_ops();
        let obs = ObservationModel::new(m(&[&[0.0, 0.0, 1.0]]), m(&[&[1.0]])).unwrap();
        let ys = vec![vec![1.0], vec![2.0], vec![1.0]];
        let trace = run_gaussian_filter(
            &Schedule::constant(ops.clone()),
            &obs,
            &GaussianBelief::point_mass(&[6.0, 0.0, 0.0]),
            &ys,
        )
        .unwrap();
        for w in trace.steps.windows(2) {
            let mut reset = w[0].filtered.clone();
            reset.reset(&[2]);
            assert_eq!(w[1].predicted, ops.predict(&reset).unwrap());
        }
        let fast = gaussian_loglik(
            &Schedule::constant(ops),
            &obs,
            &GaussianBelief::point_mass(&[6.0, 0.0, 0.0]),
            &ys,
        )
        .unwrap();
        assert_eq!(fast, trace.total_loglik);
    }

    #[test]
    fn smoothing_single_step_returns_filtered() {
        let lg = LinearGaussian::new(DenseMatrix::identity(1), m(&[&[1.0]])).unwrap();
        let obs = ObservationModel::new(m(&[&[1.0]]), m(&[&[1.0]])).unwrap();
        let sched = Schedule::constant(lg);
        let trace =
            run_gaussian_filter(&sched, &obs, &GaussianBelief::point_mass(&[0.0]), &[vec![0.3]])
                .unwrap();
        let sm = rts_smooth(&trace, &sched).unwrap();
        assert_eq!(sm, vec![trace.steps[0].filtered.clone()]);
    }

    #[test]
    fn smoothing_static_state_without_information() {
        let lg = LinearGaussian::new(DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)).unwrap();
        let obs = ObservationModel::new(DenseMatrix::identity(2), DenseMatrix::identity(2).scale(1e12))
            .unwrap();
        let init = GaussianBelief::new(vec![10.0, 20.0], DenseMatrix::identity(2).scale(4.0)).unwrap();
        let sched = Schedule::constant(lg);
        let ys: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64, -(k as f64)]).collect();
        let trace = run_gaussian_filter(&sched, &obs, &init, &ys).unwrap();
        let sm = rts_smooth(&trace, &sched).unwrap();
        let last = &trace.steps.last().unwrap().filtered.mean;
        for b in &sm {
            for (a, l) in b.mean.iter().zip(last) {
                assert!((a - l).abs() <= 1e-4 * l.abs());
            }
        }
    }
}
