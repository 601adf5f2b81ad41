//! Independent reference implementations shared by the integration tests.
//!
//! These use nalgebra directly, in the column-vector convention, with explicit
//! inverses, so they share no code with the library's filters.

#![allow(dead_code)]

use ctbp::branching::{simulate, StateVector};
use ctbp::models::{build_seir, SeirParams};
use ctbp::DenseMatrix;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

pub struct KalmanRef {
    pub pred_mean: Vec<DVector<f64>>,
    pub pred_cov: Vec<DMatrix<f64>>,
    pub filt_mean: Vec<DVector<f64>>,
    pub filt_cov: Vec<DMatrix<f64>>,
    pub increments: Vec<f64>,
}

/// Textbook Kalman filter for `x_t = A x_{t-1} + w`, `y_t = H x_t + v`.
pub fn textbook_kalman(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    ys: &[Vec<f64>],
) -> KalmanRef {
    let mut x = x0.clone();
    let mut p = p0.clone();
    let mut out = KalmanRef {
        pred_mean: vec![],
        pred_cov: vec![],
        filt_mean: vec![],
        filt_cov: vec![],
        increments: vec![],
    };
    let n = x0.len();
    for y in ys {
        let y = DVector::from_column_slice(y);
        let xp = a * &x;
        let pp = a * &p * a.transpose() + q;
        let s = h * &pp * h.transpose() + r;
        let s_inv = s.clone().try_inverse().unwrap();
        let k = &pp * h.transpose() * &s_inv;
        let e = &y - h * &xp;
        let d = y.len() as f64;
        let quad = (e.transpose() * &s_inv * &e)[(0, 0)];
        let inc = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + quad);
        x = &xp + &k * e;
        p = (DMatrix::identity(n, n) - &k * h) * &pp;
        out.pred_mean.push(xp);
        out.pred_cov.push(pp);
        out.filt_mean.push(x.clone());
        out.filt_cov.push(p.clone());
        out.increments.push(inc);
    }
    out
}

/// Textbook fixed-interval RTS smoother over a [`textbook_kalman`] run.
pub fn textbook_rts(a: &DMatrix<f64>, kf: &KalmanRef) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let n = kf.filt_mean.len();
    let mut out = vec![(kf.filt_mean[n - 1].clone(), kf.filt_cov[n - 1].clone()); n];
    for t in (0..n - 1).rev() {
        let c = &kf.filt_cov[t] * a.transpose() * kf.pred_cov[t + 1].clone().try_inverse().unwrap();
        let m = &kf.filt_mean[t] + &c * (&out[t + 1].0 - &kf.pred_mean[t + 1]);
        let p = &kf.filt_cov[t] + &c * (&out[t + 1].1 - &kf.pred_cov[t + 1]) * c.transpose();
        out[t] = (m, p);
    }
    out
}

/// Exact log likelihood of a pure-death process observed with Gaussian
/// noise, by the forward algorithm on the state space `{0..=z0}` with the
/// transition matrix `exp(Q)` of the truncated generator.
pub fn truncated_death_loglik(omega: f64, z0: usize, noise_var: f64, ys: &[f64]) -> f64 {
    let n = z0 + 1;
    let mut q = DMatrix::zeros(n, n);
    for k in 1..n {
        q[(k, k - 1)] = omega * k as f64;
        q[(k, k)] = -omega * k as f64;
    }
    let p = q.exp();
    let mut alpha = DVector::zeros(n);
    alpha[z0] = 1.0;
    let mut total = 0.0;
    for y in ys {
        let mut next = p.transpose() * &alpha;
        for k in 0..n {
            let e = y - k as f64;
            next[k] *= (-0.5 * e * e / noise_var).exp() / (2.0 * std::f64::consts::PI * noise_var).sqrt();
        }
        let mass: f64 = next.sum();
        total += mass.ln();
        alpha = next / mass;
    }
    total
}

/// Simulated daily observed cases from SEIR started at `(6, 0, 0)`, with
/// optional Gaussian noise of variance `noise_var`. Seeds whose outbreak dies
/// out (fewer than `min_cases` in total) are skipped deterministically.
pub fn seir_cases(r0: f64, days: usize, seed: u64, noise_var: f64, min_cases: f64) -> Vec<Vec<f64>> {
    let params = SeirParams::from_r0(r0, 0.375, 3.0 / 28.0, 0.75).unwrap();
    let (model, _) = build_seir(&params).unwrap();
    let grid: Vec<f64> = (1..=days).map(|t| t as f64).collect();
    let mut s = seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let path = simulate(&model, &StateVector(vec![6, 0, 0]), days as f64, &grid, &mut rng).unwrap();
        let ys: Vec<Vec<f64>> = path
            .iter()
            .map(|z| {
                let e: f64 = StandardNormal.sample(&mut rng);
                vec![z[2] as f64 + noise_var.sqrt() * e]
            })
            .collect();
        if ys.iter().map(|y| y[0]).sum::<f64>() >= min_cases {
            return ys;
        }
        s = s.wrapping_add(1_000_003);
    }
}

/// Daily observed cases from a piecewise-rate SEIR model started at `z0`,
/// with Gaussian noise of standard deviation `noise_sd`.
pub fn piecewise_cases(
    models: &ctbp::Schedule<ctbp::BranchingModel>,
    z0: &[u64],
    days: usize,
    noise_sd: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = z0.to_vec();
    (1..=days)
        .map(|t| {
            let model = models.get(t).unwrap();
            for &c in model.counter_types() {
                z[c] = 0;
            }
            ctbp::branching::advance(model, &mut z, 1.0, &mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            vec![z[2] as f64 + noise_sd * e]
        })
        .collect()
}
