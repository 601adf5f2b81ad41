//! Run configuration: a JSON document, documented in the README.

use std::path::{Path, PathBuf};

use ctbp::hybrid::SwitchPolicy;
use ctbp::models::{build_seir, build_staged_seir, SeirParams, StagedSeirParams};
use ctbp::particle::{PfOptions, Resampling};
use ctbp::{BranchingModel, DenseMatrix, ObservationModel, Offspring};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn default_delta() -> f64 {
    0.375
}
fn default_lambda() -> f64 {
    3.0 / 28.0
}
fn default_window_len() -> usize {
    7
}
fn default_p() -> f64 {
    0.75
}
fn default_sigma() -> f64 {
    1.0
}
fn default_particles() -> usize {
    256
}
fn default_replicates() -> usize {
    20
}
fn default_sim_steps() -> usize {
    30
}
fn default_chains() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_initial_mean() -> Vec<f64> {
    vec![10.0, 10.0]
}
fn default_initial_cov() -> Vec<Vec<f64>> {
    vec![vec![10.0, 0.0], vec![0.0, 10.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Which quantities the sampler treats as unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Inferred {
    R0,
    Delta,
    Lambda,
    /// All window reproduction numbers of a piecewise model.
    R,
    /// Initial exposed and infectious counts of a piecewise model.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Seir {
        r0: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        z0: Option<Vec<u64>>,
        infer: Option<Vec<Inferred>>,
    },
    Se8i8r {
        r0: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "eight")]
        k_e: usize,
        #[serde(default = "eight")]
        k_i: usize,
        z0: Option<Vec<u64>>,
        infer: Option<Vec<Inferred>>,
    },
    PiecewiseSeir {
        r_values: Vec<f64>,
        #[serde(default = "default_window_len")]
        window_len: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        initial: InitialPrior,
        infer: Option<Vec<Inferred>>,
    },
    /// A generic branching process given by rates and offspring tables.
    Custom {
        omega: Vec<f64>,
        progeny: Vec<Vec<OffspringConfig>>,
        #[serde(default)]
        counter_types: Vec<usize>,
        z0: Vec<u64>,
    },
}

fn eight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringConfig {
    pub counts: Vec<u32>,
    pub prob: f64,
}

/// Normal prior on the initial `(E, I)` counts of a piecewise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPrior {
    #[serde(default = "default_initial_mean")]
    pub mean: Vec<f64>,
    #[serde(default = "default_initial_cov")]
    pub cov: Vec<Vec<f64>>,
}

impl Default for InitialPrior {
    fn default() -> Self {
        Self {
            mean: default_initial_mean(),
            cov: default_initial_cov(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Read `sigma` as a variance instead of a standard deviation.
    #[serde(default)]
    pub sigma_is_variance: bool,
    /// Observation matrix rows; overrides the counter observation.
    pub h: Option<Vec<Vec<f64>>>,
    /// Noise covariance; overrides `sigma`.
    pub r: Option<Vec<Vec<f64>>>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            p: default_p(),
            sigma: default_sigma(),
            sigma_is_variance: false,
            h: None,
            r: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Gaussian,
    Particle,
    Hybrid,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Gaussian => "gaussian",
            EngineKind::Particle => "particle",
            EngineKind::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gaussian" => Ok(EngineKind::Gaussian),
            "particle" => Ok(EngineKind::Particle),
            "hybrid" => Ok(EngineKind::Hybrid),
            _ => Err(format!("unknown engine `{s}` (expected gaussian, particle or hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplingConfig {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// Switching threshold; defaults to 10, or 10 / k_e for staged models.
    pub threshold: Option<f64>,
    #[serde(default)]
    pub include_counters: bool,
    #[serde(default = "default_resampling")]
    pub resampling: ResamplingConfig,
}

fn default_resampling() -> ResamplingConfig {
    ResamplingConfig::Multinomial
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Gaussian,
            particles: default_particles(),
            threshold: None,
            include_counters: false,
            resampling: default_resampling(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    pub variance: f64,
    pub length_scale: f64,
    #[serde(default)]
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_r0_prior")]
    pub r0: GammaConfig,
    /// Gamma priors on the rates; flat on the log scale when absent.
    pub delta: Option<GammaConfig>,
    pub lambda: Option<GammaConfig>,
    #[serde(default = "default_gp")]
    pub gp: GpConfig,
}

fn default_r0_prior() -> GammaConfig {
    GammaConfig { shape: 4.4, scale: 0.5 }
}

fn default_gp() -> GpConfig {
    GpConfig {
        variance: 0.49,
        length_scale: 136.47,
        mean: 0.0,
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            r0: default_r0_prior(),
            delta: None,
            lambda: None,
            gp: default_gp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub adapt_window: usize,
    pub scale: Option<f64>,
    /// Standard deviations of the initial proposal on the sampling scale.
    pub initial_proposal_sd: Option<Vec<f64>>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    /// When false the sampler targets the prior alone.
    #[serde(default = "default_true")]
    pub likelihood: bool,
    #[serde(default)]
    pub prior: PriorConfig,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            steps: 81_920,
            burn_in: 20_480,
            adapt_window: 4_096,
            scale: None,
            initial_proposal_sd: None,
            chains: default_chains(),
            likelihood: true,
            prior: PriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_sim_steps")]
    pub steps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            replicates: default_replicates(),
            steps: default_sim_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub data: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: default_out_dir(),
        }
    }
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub engine: Option<EngineKind>,
    pub out_dir: Option<PathBuf>,
    pub chains: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(|e| config_err(format!("{what}: {e}")))
}

impl RunConfig {
    /// Parse a config file. Relative data paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            message: format!("cannot read file: {e}"),
        })?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if let (Some(data), Some(dir)) = (&config.io.data, path.parent()) {
            if data.is_relative() {
                config.io.data = Some(dir.join(data));
            }
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(kind) = o.engine {
            self.engine.kind = kind;
        }
        if let Some(dir) = &o.out_dir {
            self.io.out_dir = dir.clone();
        }
        if let Some(chains) = o.chains {
            self.mcmc.chains = chains;
        }
    }

    /// Check ranges and cross-field consistency.
    pub fn validate(&self) -> CliResult<()> {
        let obs = &self.observation;
        if !(0.0..=1.0).contains(&obs.p) {
            return Err(config_err(format!("observation.p = {} outside [0, 1]", obs.p)));
        }
        if !(obs.sigma.is_finite() && obs.sigma >= 0.0) {
            return Err(config_err(format!("observation.sigma = {} must be >= 0", obs.sigma)));
        }
        if self.engine.particles == 0 {
            return Err(config_err("engine.particles must be positive"));
        }
        if let Some(s) = self.engine.threshold {
            if s.is_nan() || s < 0.0 {
                return Err(config_err(format!("engine.threshold = {s} must be >= 0")));
            }
        }
        if self.mcmc.chains == 0 {
            return Err(config_err("mcmc.chains must be positive"));
        }
        if let Some(data) = &self.io.data {
            if !data.exists() {
                return Err(config_err(format!("data file {} does not exist", data.display())));
            }
        }
        for name in self.inferred() {
            let ok = match (&self.model, name) {
                (ModelConfig::Seir { .. } | ModelConfig::Se8i8r { .. }, Inferred::R0 | Inferred::Delta | Inferred::Lambda) => true,
                (ModelConfig::PiecewiseSeir { .. }, Inferred::R | Inferred::Initial) => true,
                _ => false,
            };
            if !ok {
                return Err(config_err(format!("{name:?} cannot be inferred for this model kind")));
            }
        }
        if let ModelConfig::PiecewiseSeir { initial, window_len, r_values, .. } = &self.model {
            if initial.mean.len() != 2 || initial.cov.len() != 2 || initial.cov.iter().any(|r| r.len() != 2) {
                return Err(config_err("model.initial needs a 2-vector mean and a 2x2 covariance"));
            }
            if *window_len == 0 || r_values.is_empty() {
                return Err(config_err("piecewise model needs r_values and a positive window_len"));
            }
        }
        self.build_model(None)?;
        self.observation_model()?;
        Ok(())
    }

    /// Inferred quantities, with per-kind defaults.
    pub fn inferred(&self) -> Vec<Inferred> {
        match &self.model {
            ModelConfig::Seir { infer, .. } | ModelConfig::Se8i8r { infer, .. } => {
                infer.clone().unwrap_or_else(|| vec![Inferred::R0])
            }
            ModelConfig::PiecewiseSeir { infer, .. } => infer.clone().unwrap_or_else(|| vec![Inferred::R]),
            ModelConfig::Custom { .. } => Vec::new(),
        }
    }

    /// Number of types of the configured model.
    pub fn types(&self) -> usize {
        match &self.model {
            ModelConfig::Seir { .. } | ModelConfig::PiecewiseSeir { .. } => 3,
            ModelConfig::Se8i8r { k_e, k_i, .. } => k_e + k_i + 1,
            ModelConfig::Custom { omega, .. } => omega.len(),
        }
    }

    /// The model with rates from the config, or a single-window model for
    /// window `window` of a piecewise config.
    pub fn build_model(&self, window: Option<usize>) -> CliResult<BranchingModel> {
        let p = self.observation.p;
        let model = match &self.model {
            ModelConfig::Seir { r0, delta, lambda, .. } => build_seir(&SeirParams::from_r0(*r0, *delta, *lambda, p)?)?.0,
            ModelConfig::Se8i8r { r0, delta, lambda, k_e, k_i, .. } => {
                let base = SeirParams::from_r0(*r0, *delta, *lambda, p)?;
                build_staged_seir(&StagedSeirParams::new(base, *k_e, *k_i)?)?.0
            }
            ModelConfig::PiecewiseSeir { r_values, delta, lambda, .. } => {
                let r = r_values[window.unwrap_or(0).min(r_values.len() - 1)];
                build_seir(&SeirParams::from_r0(r, *delta, *lambda, p)?)?.0
            }
            ModelConfig::Custom { omega, progeny, counter_types, .. } => BranchingModel::new(
                omega.clone(),
                progeny
                    .iter()
                    .map(|opts| opts.iter().map(|o| Offspring::new(o.counts.clone(), o.prob)).collect())
                    .collect(),
                vec![0.0; omega.len()],
                counter_types.clone(),
            )?,
        };
        Ok(model)
    }

    /// Fixed initial state, when the model has one.
    pub fn z0(&self) -> Option<Vec<u64>> {
        match &self.model {
            ModelConfig::Seir { z0, .. } => Some(z0.clone().unwrap_or_else(|| vec![6, 0, 0])),
            ModelConfig::Se8i8r { z0, k_e, k_i, .. } => Some(z0.clone().unwrap_or_else(|| {
                let mut z = vec![0; k_e + k_i + 1];
                z[0] = 6;
                z
            })),
            ModelConfig::Custom { z0, .. } => Some(z0.clone()),
            ModelConfig::PiecewiseSeir { .. } => None,
        }
    }

    /// Observation noise covariance implied by `sigma` or `r`.
    fn noise(&self, d: usize) -> CliResult<DenseMatrix> {
        let obs = &self.observation;
        if let Some(r) = &obs.r {
            return matrix(r, "observation.r");
        }
        let var = if obs.sigma_is_variance { obs.sigma } else { obs.sigma * obs.sigma };
        Ok(DenseMatrix::from_diag(&vec![var; d]))
    }

    pub fn observation_model(&self) -> CliResult<ObservationModel> {
        let r = self.types();
        let h = match &self.observation.h {
            Some(rows) => matrix(rows, "observation.h")?,
            None => {
                let counters = self.build_model(None)?.counter_types().to_vec();
                if counters.is_empty() {
                    return Err(config_err("model has no counter type; set observation.h"));
                }
                let mut h = DenseMatrix::zeros(counters.len(), r);
                for (row, c) in counters.iter().enumerate() {
                    h[(row, *c)] = 1.0;
                }
                h
            }
        };
        let noise = self.noise(h.rows())?;
        Ok(ObservationModel::new(h, noise)?)
    }

    pub fn pf_options(&self, keep_particles: bool) -> PfOptions {
        PfOptions {
            n: self.engine.particles,
            resampling: match self.engine.resampling {
                ResamplingConfig::Multinomial => Resampling::Multinomial,
                ResamplingConfig::Systematic => Resampling::Systematic,
            },
            keep_particles,
        }
    }

    pub fn switch_policy(&self) -> CliResult<SwitchPolicy> {
        let default = match &self.model {
            ModelConfig::Se8i8r { k_e, .. } => 10.0 / *k_e as f64,
            _ => 10.0,
        };
        let mut policy = SwitchPolicy::new(self.engine.threshold.unwrap_or(default))?;
        policy.include_counters = self.engine.include_counters;
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> RunConfig {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(r#"{"model": {"kind": "seir", "r0": 2.8}}"#);
        assert_eq!(c.engine.kind, EngineKind::Gaussian);
        assert_eq!(c.z0(), Some(vec![6, 0, 0]));
        assert_eq!(c.inferred(), vec![Inferred::R0]);
        assert_eq!(c.mcmc.prior.r0, GammaConfig { shape: 4.4, scale: 0.5 });
        let obs = c.observation_model().unwrap();
        assert_eq!(obs.h.as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(obs.r.as_slice(), &[1.0]);
        c.validate().unwrap();
    }

    #[test]
    fn sigma_reads_as_sd_unless_flagged() {
        let mut c = parse(r#"{"model": {"kind": "seir", "r0": 2.0}, "observation": {"sigma": 20}}"#);
        assert_eq!(c.observation_model().unwrap().r.as_slice(), &[400.0]);
        c.observation.sigma_is_variance = true;
        assert_eq!(c.observation_model().unwrap().r.as_slice(), &[20.0]);
    }

    #[test]
    fn staged_threshold_default() {
        let c = parse(r#"{"model": {"kind": "se8i8r", "r0": 2.8}}"#);
        assert_eq!(c.switch_policy().unwrap().threshold, 1.25);
        assert_eq!(c.types(), 17);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = parse(r#"{"model": {"kind": "seir", "r0": 2.8}, "seed": 3}"#);
        c.apply(&Overrides {
            seed: Some(9),
            engine: Some(EngineKind::Hybrid),
            out_dir: Some("x".into()),
            chains: Some(4),
        });
        assert_eq!((c.seed, c.engine.kind, c.mcmc.chains), (9, EngineKind::Hybrid, 4));
        assert_eq!(c.io.out_dir, PathBuf::from("x"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = [
            r#"{"model": {"kind": "seir", "r0": 2.8}, "observation": {"p": 1.5}}"#,
            r#"{"model": {"kind": "seir", "r0": -1}}"#,
            r#"{"model": {"kind": "seir", "r0": 2.8, "infer": ["r"]}}"#,
            r#"{"model": {"kind": "seir", "r0": 2.8}, "io": {"data": "/no/such/file.csv"}}"#,
            r#"{"model": {"kind": "custom", "omega": [1.0], "progeny": [[]], "z0": [1]}}"#,
        ];
        for json in bad {
            let err = parse(json).validate().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{json}: {err}");
        }
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"kind": "sir"}}"#).is_err());
    }
}
