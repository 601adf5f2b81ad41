//! Continuous-time multitype branching processes.
//!
//! Agents of `r` types live exponentially distributed lifetimes. When a type-`i`
//! agent dies it is replaced by a random progeny vector drawn from a finite
//! list. Counter types have zero lifetime rate and only accumulate events; the
//! simulator resets them after every observation time so they report
//! increments.
//!
//! Over a step of length `s` the first two conditional moments are linear in
//! the current state: `E[z_{t+s} | z_t] = z_t F` and
//! `Var(z_{t+s} | z_t) = Σ_i z_{t,i} V_i`. [`compute_moment_operators`] obtains
//! `F` and every `V_i` from one exponential of the `r(r+1)`-dimensional block
//! generator returned by [`block_generator`].

use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::linalg::{self, kron_sum, mat_exp, DenseMatrix, DEFAULT_EXP_TOL};

const PROB_SUM_TOL: f64 = 1e-12;

/// One possible outcome of a death: the progeny vector and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub counts: Vec<u32>,
    pub prob: f64,
}

impl Offspring {
    pub fn new(counts: Vec<u32>, prob: f64) -> Self {
        Self { counts, prob }
    }
}

/// Rates and offspring distributions of a branching process with constant immigration.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingModel {
    omega: Vec<f64>,
    progeny: Vec<Vec<Offspring>>,
    alpha: Vec<f64>,
    counter_types: Vec<usize>,
}

impl BranchingModel {
    /// Validate and build a model. Types are 0-based.
    pub fn new(
        omega: Vec<f64>,
        progeny: Vec<Vec<Offspring>>,
        alpha: Vec<f64>,
        counter_types: Vec<usize>,
    ) -> Result<Self> {
        let r = omega.len();
        if r == 0 {
            return Err(Error::Model("a branching model needs at least one type".into()));
        }
        if progeny.len() != r || alpha.len() != r {
            return Err(Error::Model(format!(
                "{r} lifetime rates but {} progeny lists and {} immigration rates",
                progeny.len(),
                alpha.len()
            )));
        }
        for (i, w) in omega.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Model(format!("lifetime rate of type {i} is {w}")));
            }
        }
        for (i, a) in alpha.iter().enumerate() {
            if !(a.is_finite() && *a >= 0.0) {
                return Err(Error::Model(format!("immigration rate of type {i} is {a}")));
            }
        }
        for (i, outcomes) in progeny.iter().enumerate() {
            for o in outcomes {
                if o.counts.len() != r {
                    return Err(Error::Model(format!(
                        "progeny vector of type {i} has length {}, expected {r}",
                        o.counts.len()
                    )));
                }
                if !(0.0..=1.0).contains(&o.prob) {
                    return Err(Error::Model(format!(
                        "progeny probability {} of type {i} outside [0, 1]",
                        o.prob
                    )));
                }
            }
            if omega[i] > 0.0 {
                let total: f64 = outcomes.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::Model(format!(
                        "progeny probabilities of type {i} sum to {total}"
                    )));
                }
            }
        }
        let mut counter_types = counter_types;
        counter_types.sort_unstable();
        counter_types.dedup();
        for &c in &counter_types {
            if c >= r {
                return Err(Error::Model(format!("counter type {c} out of range")));
            }
            if omega[c] != 0.0 {
                return Err(Error::Model(format!(
                    "counter type {c} must have zero lifetime rate"
                )));
            }
        }
        Ok(Self {
            omega,
            progeny,
            alpha,
            counter_types,
        })
    }

    /// Number of types `r`.
    pub fn types(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn progeny(&self, i: usize) -> &[Offspring] {
        &self.progeny[i]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn counter_types(&self) -> &[usize] {
        &self.counter_types
    }

    pub fn has_immigration(&self) -> bool {
        self.alpha.iter().any(|a| *a > 0.0)
    }

    /// Expected progeny matrix: `f[i][k]` is the mean number of type-`k`
    /// offspring of a type-`i` death.
    pub fn mean_progeny(&self) -> DenseMatrix {
        let r = self.types();
        let mut f = DenseMatrix::zeros(r, r);
        for i in 0..r {
            for o in &self.progeny[i] {
                for k in 0..r {
                    f[(i, k)] += o.prob * f64::from(o.counts[k]);
                }
            }
        }
        f
    }
}

/// Agent counts per type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector(pub Vec<u64>);

impl StateVector {
    pub fn zeros(r: usize) -> Self {
        Self(vec![0; r])
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    /// Zero the given coordinates.
    pub fn reset(&mut self, types: &[usize]) {
        for &c in types {
            self.0[c] = 0;
        }
    }
}

impl From<Vec<u64>> for StateVector {
    fn from(v: Vec<u64>) -> Self {
        Self(v)
    }
}

impl Deref for StateVector {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [u64] {
        &mut self.0
    }
}

/// Characteristic matrix `Ω`: `Ω_ik = ω_i f_ik` off the diagonal and
/// `ω_i (f_ii - 1)` on it. Immigration is ignored; augment first.
pub fn build_omega(model: &BranchingModel) -> DenseMatrix {
    let r = model.types();
    let mut omega = model.mean_progeny();
    for i in 0..r {
        let w = model.omega[i];
        for k in 0..r {
            omega[(i, k)] *= w;
        }
        omega[(i, i)] -= w;
    }
    omega
}

/// Replace constant immigration by an extra type that is pinned at one agent.
///
/// The new last type dies at rate `Σα` and is replaced by itself plus one
/// offspring of type `i` with probability `α_i / Σα`. Callers must start the
/// extra coordinate at 1. Models without immigration are returned unchanged.
pub fn augment_immigration(model: &BranchingModel) -> Result<BranchingModel> {
    if !model.has_immigration() {
        return Ok(model.clone());
    }
    let r = model.types();
    let total: f64 = model.alpha.iter().sum();
    let mut omega = model.omega.clone();
    omega.push(total);
    let mut progeny: Vec<Vec<Offspring>> = model
        .progeny
        .iter()
        .map(|outs| {
            outs.iter()
                .map(|o| {
                    let mut counts = o.counts.clone();
                    counts.push(0);
                    Offspring::new(counts, o.prob)
                })
                .collect()
        })
        .collect();
    let arrivals = model
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 0.0)
        .map(|(i, a)| {
            let mut counts = vec![0u32; r + 1];
            counts[i] = 1;
            counts[r] = 1;
            Offspring::new(counts, a / total)
        })
        .collect();
    progeny.push(arrivals);
    BranchingModel::new(omega, progeny, vec![0.0; r + 1], model.counter_types.clone())
}

/// The `r² × r` matrix whose `i`-th column is `vec(C_i)` with
/// `C_i = ω_i Σ_j (j - u_i)ᵀ (j - u_i) p_{i,j}`.
pub fn build_variance_source(model: &BranchingModel) -> DenseMatrix {
    let r = model.types();
    let mut c = DenseMatrix::zeros(r * r, r);
    for i in 0..r {
        let w = model.omega[i];
        if w == 0.0 {
            continue;
        }
        let mut ci = DenseMatrix::zeros(r, r);
        for o in &model.progeny[i] {
            let d: Vec<f64> = (0..r)
                .map(|k| f64::from(o.counts[k]) - if k == i { 1.0 } else { 0.0 })
                .collect();
            for k in 0..r {
                for l in 0..r {
                    ci[(k, l)] += w * o.prob * d[k] * d[l];
                }
            }
        }
        for (row, v) in linalg::vec(&ci).into_iter().enumerate() {
            c[(row, i)] = v;
        }
    }
    c
}

/// Block generator `[[Ωᵀ ⊕ Ωᵀ, C], [0, Ωᵀ]]` of size `r(r+1)`.
pub fn block_generator(model: &BranchingModel) -> Result<DenseMatrix> {
    let r = model.types();
    let omega_t = build_omega(model).transpose();
    let top_left = kron_sum(&omega_t, &omega_t)?;
    let c = build_variance_source(model);
    let mut block = DenseMatrix::zeros(r * r + r, r * r + r);
    block.set_block(0, 0, &top_left);
    block.set_block(0, r * r, &c);
    block.set_block(r * r, r * r, &omega_t);
    Ok(block)
}

/// One-step mean operator `F` and per-type variance contributions `V_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentOperators {
    pub f: DenseMatrix,
    pub v: Vec<DenseMatrix>,
    pub step: f64,
    pub counter_types: Vec<usize>,
}

impl MomentOperators {
    pub fn types(&self) -> usize {
        self.f.rows()
    }

    /// Operators for a step of this length followed by a step of `next`.
    ///
    /// `F = F_a F_b` and `V_i = Σ_k (F_a)_ik V^b_k + F_bᵀ V^a_i F_b`, which is
    /// the law of total variance applied across the two steps.
    pub fn then(&self, next: &MomentOperators) -> Result<MomentOperators> {
        let r = self.types();
        if next.types() != r {
            return Err(Error::Dimension("composing operators of different sizes".into()));
        }
        let f = &self.f * &next.f;
        let ft = next.f.transpose();
        let v = (0..r)
            .map(|i| {
                let mut vi = &(&ft * &self.v[i]) * &next.f;
                for k in 0..r {
                    vi.add_scaled(self.f[(i, k)], &next.v[k]);
                }
                vi.symmetrize()
            })
            .collect();
        Ok(MomentOperators {
            f,
            v,
            step: self.step + next.step,
            counter_types: self.counter_types.clone(),
        })
    }
}

/// Compute `F = e^{Ω s}` and the `V_i` for a step of length `s`.
///
/// The model must not carry immigration; use [`augment_immigration`] first.
pub fn compute_moment_operators(model: &BranchingModel, step: f64) -> Result<MomentOperators> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step length {step} must be positive")));
    }
    if model.has_immigration() {
        return Err(Error::Model(
            "moment operators need an immigration-free model; augment it first".into(),
        ));
    }
    let r = model.types();
    let omega = build_omega(model);
    let f = mat_exp(&omega.scale(step), DEFAULT_EXP_TOL)?;
    let big = mat_exp(&block_generator(model)?.scale(step), DEFAULT_EXP_TOL)?;

    let lower_right = big.block(r * r, r * r, r, r);
    let mismatch = (&lower_right - &f.transpose()).max_abs();
    if mismatch > 1e-8 * f.max_abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "block exponential disagrees with the mean operator by {mismatch:e}"
        )));
    }

    let upper_right = big.block(0, r * r, r * r, r);
    let v = (0..r)
        .map(|i| Ok(linalg::unvec(&upper_right.column(i), r, r)?.symmetrize()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentOperators {
        f,
        v,
        step,
        counter_types: model.counter_types.clone(),
    })
}

/// `E[z_{t+1} | z_t] = z_t F`.
pub fn conditional_mean(z: &[f64], ops: &MomentOperators) -> Result<Vec<f64>> {
    ops.f.left_mul_vec(z)
}

/// `Var(z_{t+1} | z_t) = Σ_i z_i V_i`.
pub fn conditional_var(z: &[f64], ops: &MomentOperators) -> Result<DenseMatrix> {
    let r = ops.types();
    if z.len() != r {
        return Err(Error::Dimension(format!(
            "state of length {} for a {r}-type model",
            z.len()
        )));
    }
    let mut out = DenseMatrix::zeros(r, r);
    for (zi, vi) in z.iter().zip(&ops.v) {
        if *zi != 0.0 {
            out.add_scaled(*zi, vi);
        }
    }
    out.symmetrize_in_place();
    Ok(out)
}

/// What happened at a simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A type-`agent` death resolved to progeny outcome `outcome`.
    Death { agent: usize, outcome: usize },
    /// An immigrant of the given type arrived.
    Immigration { agent: usize },
}

/// Advance `z` in place by `duration` with the direct (Gillespie) method.
pub fn advance<R: Rng + ?Sized>(model: &BranchingModel, z: &mut [u64], duration: f64, rng: &mut R) {
    advance_observed(model, z, duration, rng, |_, _| {});
}

/// [`advance`], calling `observer(time_since_start, event)` after each event.
pub fn advance_observed<R, F>(
    model: &BranchingModel,
    z: &mut [u64],
    duration: f64,
    rng: &mut R,
    mut observer: F,
) where
    R: Rng + ?Sized,
    F: FnMut(f64, Event),
{
    let r = model.types();
    debug_assert_eq!(z.len(), r);
    let immigration: f64 = model.alpha.iter().sum();
    let mut t = 0.0;
    loop {
        let deaths: f64 = (0..r).map(|i| model.omega[i] * z[i] as f64).sum();
        let total = deaths + immigration;
        if total <= 0.0 {
            return;
        }
        let wait: f64 = Exp1.sample(rng);
        t += wait / total;
        if t > duration {
            return;
        }
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for i in 0..r {
            let rate = model.omega[i] * z[i] as f64;
            if u < rate {
                chosen = Some(i);
                break;
            }
            u -= rate;
        }
        match chosen {
            Some(i) => {
                let outcome = draw_outcome(&model.progeny[i], rng);
                let o = &model.progeny[i][outcome];
                z[i] -= 1;
                for (zk, ck) in z.iter_mut().zip(&o.counts) {
                    *zk += u64::from(*ck);
                }
                observer(t, Event::Death { agent: i, outcome });
            }
            None => {
                // Immigration, or a death whose rate was lost to rounding.
                let mut u = rng.random::<f64>() * immigration;
                let mut agent = None;
                for (i, a) in model.alpha.iter().enumerate() {
                    if *a > 0.0 && u < *a {
                        agent = Some(i);
                        break;
                    }
                    u -= a;
                }
                let agent = match agent.or_else(|| model.alpha.iter().rposition(|a| *a > 0.0)) {
                    Some(a) => a,
                    None => match (0..r).rev().find(|&i| model.omega[i] * z[i] as f64 > 0.0) {
                        Some(i) => {
                            let outcome = draw_outcome(&model.progeny[i], rng);
                            let o = &model.progeny[i][outcome];
                            z[i] -= 1;
                            for (zk, ck) in z.iter_mut().zip(&o.counts) {
                                *zk += u64::from(*ck);
                            }
                            observer(t, Event::Death { agent: i, outcome });
                            continue;
                        }
                        None => return,
                    },
                };
                z[agent] += 1;
                observer(t, Event::Immigration { agent });
            }
        }
    }
}

fn draw_outcome<R: Rng + ?Sized>(outcomes: &[Offspring], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (k, o) in outcomes.iter().enumerate() {
        if u < o.prob {
            return k;
        }
        u -= o.prob;
    }
    outcomes.len() - 1
}

/// Exact realization of the process observed at the `grid` times.
///
/// Counter types are reset to zero immediately after each grid time is
/// recorded, so recorded counters hold increments since the previous grid
/// point.
pub fn simulate<R: Rng + ?Sized>(
    model: &BranchingModel,
    z0: &StateVector,
    horizon: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<StateVector>> {
    if z0.len() != model.types() {
        return Err(Error::Dimension(format!(
            "initial state of length {} for a {}-type model",
            z0.len(),
            model.types()
        )));
    }
    let mut prev = 0.0;
    for &g in grid {
        if !(g >= prev && g <= horizon) {
            return Err(Error::InvalidInput(format!(
                "grid time {g} not sorted within [0, {horizon}]"
            )));
        }
        prev = g;
    }
    let mut z = z0.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    for &g in grid {
        advance(model, &mut z, g - now, rng);
        now = g;
        out.push(z.clone());
        z.reset(&model.counter_types);
    }
    Ok(out)
}

/// Dominant eigenvalue of `Ω` (the Malthusian parameter) and its left
/// eigenvector, scaled so the first non-negligible entry is 1.
pub fn malthusian(omega: &DenseMatrix) -> Result<(f64, Vec<f64>)> {
    let vals = linalg::real_eigenvalues(omega)?;
    let phi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = omega.rows();
    let shifted = &omega.transpose() - &DenseMatrix::identity(n).scale(phi);
    let svd = shifted.to_nalgebra().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return singular vectors".into()))?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, s)| if *s < best.1 { (k, *s) } else { best });
    let mut u: Vec<f64> = v_t.row(k).iter().copied().collect();
    let pivot = u
        .iter()
        .copied()
        .find(|x| x.abs() > 1e-12)
        .ok_or_else(|| Error::Numerical("zero eigenvector".into()))?;
    for x in &mut u {
        *x /= pivot;
    }
    Ok((phi, u))
}
