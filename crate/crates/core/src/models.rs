//! Concrete epidemic models expressed as branching processes.
//!
//! Type layout for SEIR is `(E, I, C)`, where `C` counts observed E→I
//! transitions. The staged variant uses `(E_1..E_kE, I_1..I_kI, C)`.

use std::collections::HashMap;

use crate::branching::{compute_moment_operators, BranchingModel, MomentOperators, Offspring};
use crate::error::{Error, Result};
use crate::filter::{ObservationModel, Schedule};
use crate::linalg::DenseMatrix;

/// Rates of the SEIR model with an observation counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeirParams {
    /// Infection rate per infectious agent.
    pub beta: f64,
    /// Rate of leaving the exposed state.
    pub delta: f64,
    /// Recovery rate.
    pub lambda: f64,
    /// Probability that an E→I transition is observed.
    pub p: f64,
}

impl SeirParams {
    pub fn new(beta: f64, delta: f64, lambda: f64, p: f64) -> Result<Self> {
        for (name, v) in [("beta", beta), ("delta", delta), ("lambda", lambda)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Model(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Model(format!("observation probability {p} outside [0, 1]")));
        }
        Ok(Self {
            beta,
            delta,
            lambda,
            p,
        })
    }

    /// Parameterize by the reproduction number `R0 = β / λ`.
    pub fn from_r0(r0: f64, delta: f64, lambda: f64, p: f64) -> Result<Self> {
        Self::new(r0 * lambda, delta, lambda, p)
    }

    pub fn r0(&self) -> f64 {
        self.beta / self.lambda
    }
}

/// SEIR with Erlang-distributed exposed and infectious periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagedSeirParams {
    /// Total-period rates: each stage runs at `k_e · delta` or `k_i · lambda`.
    pub base: SeirParams,
    pub k_e: usize,
    pub k_i: usize,
}

impl StagedSeirParams {
    pub fn new(base: SeirParams, k_e: usize, k_i: usize) -> Result<Self> {
        if k_e == 0 || k_i == 0 {
            return Err(Error::Model("stage counts must be at least 1".into()));
        }
        Ok(Self { base, k_e, k_i })
    }

    pub fn stage_delta(&self) -> f64 {
        self.k_e as f64 * self.base.delta
    }

    pub fn stage_lambda(&self) -> f64 {
        self.k_i as f64 * self.base.lambda
    }

    pub fn types(&self) -> usize {
        self.k_e + self.k_i + 1
    }
}

/// Observation of the counter (last type) with noise variance `var`.
pub fn counter_observation(types: usize, var: f64) -> Result<ObservationModel> {
    if !(var.is_finite() && var >= 0.0) {
        return Err(Error::Config(format!("observation variance {var} must be >= 0")));
    }
    let mut h = DenseMatrix::zeros(1, types);
    h[(0, types - 1)] = 1.0;
    ObservationModel::new(h, DenseMatrix::from_diag(&[var]))
}

/// Three-type SEIR: E dies at `δ` into I (plus a counter tick w.p. `p`);
/// I dies at `β + λ`, either replacing itself plus a new E (w.p. `β/(β+λ)`)
/// or leaving nothing. The observation template has zero noise.
pub fn build_seir(params: &SeirParams) -> Result<(BranchingModel, ObservationModel)> {
    let SeirParams {
        beta,
        delta,
        lambda,
        p,
    } = *params;
    let w_i = beta + lambda;
    let model = BranchingModel::new(
        vec![delta, w_i, 0.0],
        vec![
            vec![
                Offspring::new(vec![0, 1, 0], 1.0 - p),
                Offspring::new(vec![0, 1, 1], p),
            ],
            vec![
                Offspring::new(vec![1, 1, 0], beta / w_i),
                Offspring::new(vec![0, 0, 0], lambda / w_i),
            ],
            vec![],
        ],
        vec![0.0; 3],
        vec![2],
    )?;
    Ok((model, counter_observation(3, 0.0)?))
}

/// Staged SEIR with `k_e` exposed and `k_i` infectious stages.
///
/// Each `I_i` dies at `β + k_i λ`; with probability `β/(β + k_i λ)` it is
/// replaced by itself plus a new `E_1`, otherwise it advances to `I_{i+1}`
/// (or is removed from the last stage). `E_kE → I_1` ticks the counter with
/// probability `p`. With one stage each this is exactly [`build_seir`].
pub fn build_staged_seir(params: &StagedSeirParams) -> Result<(BranchingModel, ObservationModel)> {
    let (ke, ki) = (params.k_e, params.k_i);
    let r = params.types();
    let counter = r - 1;
    let d = params.stage_delta();
    let l = params.stage_lambda();
    let beta = params.base.beta;
    let p = params.base.p;
    let unit = |idx: &[usize]| {
        let mut v = vec![0u32; r];
        for &i in idx {
            v[i] += 1;
        }
        v
    };

    let mut omega = Vec::with_capacity(r);
    let mut progeny = Vec::with_capacity(r);
    for j in 0..ke {
        omega.push(d);
        if j + 1 < ke {
            progeny.push(vec![Offspring::new(unit(&[j + 1]), 1.0)]);
        } else {
            progeny.push(vec![
                Offspring::new(unit(&[ke]), 1.0 - p),
                Offspring::new(unit(&[ke, counter]), p),
            ]);
        }
    }
    let w = beta + l;
    for i in 0..ki {
        omega.push(w);
        let me = ke + i;
        let advance = if i + 1 < ki { unit(&[me + 1]) } else { unit(&[]) };
        progeny.push(vec![
            Offspring::new(unit(&[0, me]), beta / w),
            Offspring::new(advance, l / w),
        ]);
    }
    omega.push(0.0);
    progeny.push(vec![]);
    let model = BranchingModel::new(omega, progeny, vec![0.0; r], vec![counter])?;
    Ok((model, counter_observation(r, 0.0)?))
}

/// A half-open day range `(start, end]` with constant rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub params: SeirParams,
}

/// SEIR whose rates are constant within consecutive windows.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseParams {
    pub windows: Vec<Window>,
}

impl PiecewiseParams {
    /// Equal-length windows starting at day 0, one per reproduction number,
    /// with `β_n = λ R_n`.
    pub fn from_r_values(
        r_values: &[f64],
        window_len: usize,
        delta: f64,
        lambda: f64,
        p: f64,
    ) -> Result<Self> {
        let windows = r_values
            .iter()
            .enumerate()
            .map(|(n, r)| {
                Ok(Window {
                    start: n * window_len,
                    end: (n + 1) * window_len,
                    params: SeirParams::from_r0(*r, delta, lambda, p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { windows })
    }

    /// Last covered day.
    pub fn horizon(&self) -> usize {
        self.windows.last().map_or(0, |w| w.end)
    }

    fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::Config("no parameter windows".into()));
        }
        let mut expect = 0;
        for w in &self.windows {
            if w.start != expect {
                return Err(Error::Config(format!(
                    "window starting at day {} leaves a gap or overlap at day {expect}",
                    w.start
                )));
            }
            if w.end <= w.start {
                return Err(Error::Config(format!("empty window ({}, {}]", w.start, w.end)));
            }
            expect = w.end;
        }
        Ok(())
    }
}

/// Per-window models and unit-step moment operators.
#[derive(Debug, Clone)]
pub struct PiecewiseOperators {
    pub models: Schedule<BranchingModel>,
    pub operators: Schedule<MomentOperators>,
    /// Number of distinct operator sets actually computed.
    pub computations: usize,
}

fn key(p: &SeirParams) -> [u64; 4] {
    [p.beta.to_bits(), p.delta.to_bits(), p.lambda.to_bits(), p.p.to_bits()]
}

/// Build one operator set per window, computing each distinct parameter tuple
/// once.
pub fn build_piecewise(params: &PiecewiseParams) -> Result<PiecewiseOperators> {
    params.validate()?;
    let mut cache: HashMap<[u64; 4], (BranchingModel, MomentOperators)> = HashMap::new();
    let mut models = Vec::with_capacity(params.windows.len());
    let mut ops = Vec::with_capacity(params.windows.len());
    let mut lengths = Vec::with_capacity(params.windows.len());
    for w in &params.windows {
        let entry = match cache.get(&key(&w.params)) {
            Some(e) => e.clone(),
            None => {
                let (model, _) = build_seir(&w.params)?;
                let op = compute_moment_operators(&model, 1.0)?;
                cache.insert(key(&w.params), (model.clone(), op.clone()));
                (model, op)
            }
        };
        models.push(entry.0);
        ops.push(entry.1);
        lengths.push(w.end - w.start);
    }
    Ok(PiecewiseOperators {
        models: Schedule::windows(models, &lengths)?,
        operators: Schedule::windows(ops, &lengths)?,
        computations: cache.len(),
    })
}
