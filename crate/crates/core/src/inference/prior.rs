//! Parameter vectors, transforms and prior densities.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::filter::log_normal_pdf;
use crate::linalg::{Cholesky, DenseMatrix};

/// Scale on which a coordinate is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    #[default]
    Identity,
    Log,
}

impl Transform {
    pub fn to_sampling(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
        }
    }

    pub fn to_natural(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.exp(),
        }
    }

    /// `log |dθ/dφ|` at sampling-scale value `phi`.
    fn log_jacobian(self, phi: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => phi,
        }
    }
}

/// Named parameters stored on the sampling scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub names: Vec<String>,
    pub transforms: Vec<Transform>,
    /// Sampling-scale values.
    pub values: Vec<f64>,
}

impl ParameterVector {
    pub fn from_natural(names: Vec<String>, transforms: Vec<Transform>, natural: &[f64]) -> Result<Self> {
        if names.len() != transforms.len() || names.len() != natural.len() {
            return Err(Error::Dimension(format!(
                "{} names, {} transforms and {} values",
                names.len(),
                transforms.len(),
                natural.len()
            )));
        }
        let values: Vec<f64> = natural
            .iter()
            .zip(&transforms)
            .map(|(x, t)| t.to_sampling(*x))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "parameter values {natural:?} are not representable on the sampling scale"
            )));
        }
        Ok(Self {
            names,
            transforms,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn natural(&self) -> Vec<f64> {
        to_natural(&self.transforms, &self.values)
    }

    /// Same names and transforms, new sampling-scale values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            names: self.names.clone(),
            transforms: self.transforms.clone(),
            values,
        }
    }
}

pub(crate) fn to_natural(transforms: &[Transform], values: &[f64]) -> Vec<f64> {
    values.iter().zip(transforms).map(|(v, t)| t.to_natural(*v)).collect()
}

/// One factor of a prior density.
#[derive(Debug, Clone)]
pub enum PriorComponent {
    /// Gamma(shape, scale) on the natural value of one coordinate.
    Gamma { index: usize, shape: f64, scale: f64 },
    /// Multivariate normal on the natural values of several coordinates.
    Mvn {
        indices: Vec<usize>,
        mean: Vec<f64>,
        chol: Cholesky,
    },
    /// Constant-mean Gaussian process on a time grid, applied to the
    /// sampling-scale values, with kernel `σ² exp(-|t_m - t_n| / ℓ)`.
    GpGrid {
        indices: Vec<usize>,
        mean: f64,
        chol: Cholesky,
    },
    /// Indicator of `lower <= θ <= upper` on the natural value.
    Bounds { index: usize, lower: f64, upper: f64 },
}

impl PriorComponent {
    pub fn gamma(index: usize, shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(Error::Config(format!("gamma shape {shape} and scale {scale} must be positive")));
        }
        Ok(Self::Gamma { index, shape, scale })
    }

    pub fn mvn(indices: Vec<usize>, mean: Vec<f64>, cov: &DenseMatrix) -> Result<Self> {
        if indices.len() != mean.len() || cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::Dimension("normal prior dimensions disagree".into()));
        }
        let chol = Cholesky::new(cov)
            .map_err(|_| Error::Config("normal prior covariance must be positive definite".into()))?;
        Ok(Self::Mvn { indices, mean, chol })
    }

    /// GP prior with exponential kernel on the given grid times.
    pub fn gp_grid(indices: Vec<usize>, times: &[f64], variance: f64, length_scale: f64, mean: f64) -> Result<Self> {
        if !(variance > 0.0 && length_scale > 0.0) {
            return Err(Error::Config(format!(
                "GP variance {variance} and length scale {length_scale} must be positive"
            )));
        }
        if indices.len() != times.len() {
            return Err(Error::Dimension("GP prior needs one grid time per coordinate".into()));
        }
        let chol = Cholesky::new(&exponential_kernel(times, variance, length_scale))?;
        Ok(Self::GpGrid { indices, mean, chol })
    }

    pub fn bounds(index: usize, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::Config(format!("invalid bounds [{lower}, {upper}]")));
        }
        Ok(Self::Bounds { index, lower, upper })
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            Self::Gamma { index, .. } | Self::Bounds { index, .. } => vec![*index],
            Self::Mvn { indices, .. } | Self::GpGrid { indices, .. } => indices.clone(),
        }
    }

    /// Whether the density is stated on natural values (and so needs a
    /// Jacobian for log-sampled coordinates).
    fn natural_scale(&self) -> bool {
        matches!(self, Self::Gamma { .. } | Self::Mvn { .. })
    }
}

/// Covariance `σ² exp(-|t_m - t_n| / ℓ)` on a grid.
pub fn exponential_kernel(times: &[f64], variance: f64, length_scale: f64) -> DenseMatrix {
    let n = times.len();
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = variance * (-(times[i] - times[j]).abs() / length_scale).exp();
        }
    }
    k
}

/// `log` of the Gamma(shape, scale) density; −∞ for `x <= 0`.
pub fn gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

/// Product of independent components; coordinates no component mentions are
/// flat on the sampling scale.
#[derive(Debug, Clone, Default)]
pub struct PriorSpec {
    pub components: Vec<PriorComponent>,
}

impl PriorSpec {
    pub fn new(components: Vec<PriorComponent>) -> Self {
        Self { components }
    }

    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        for c in &self.components {
            if let Some(i) = c.indices().into_iter().find(|i| *i >= dim) {
                return Err(Error::Dimension(format!("prior refers to coordinate {i} of {dim}")));
            }
        }
        Ok(())
    }
}

/// Log prior density of the sampling-scale values, including
/// `log |dθ/dφ|` for log-sampled coordinates covered by natural-scale
/// components. Out-of-support values give −∞.
pub fn log_prior(theta: &ParameterVector, prior: &PriorSpec) -> Result<f64> {
    prior.check(theta.dim())?;
    Ok(log_prior_values(&theta.transforms, &theta.values, prior))
}

pub(crate) fn log_prior_values(transforms: &[Transform], values: &[f64], prior: &PriorSpec) -> f64 {
    let natural = to_natural(transforms, values);
    let mut total = 0.0;
    let mut jacobian_done = vec![false; values.len()];
    for c in &prior.components {
        let lp = match c {
            PriorComponent::Gamma { index, shape, scale } => gamma_logpdf(natural[*index], *shape, *scale),
            PriorComponent::Mvn { indices, mean, chol } => {
                let x: Vec<f64> = indices.iter().map(|i| natural[*i]).collect();
                log_normal_pdf(&x, mean, chol)
            }
            PriorComponent::GpGrid { indices, mean, chol } => {
                let x: Vec<f64> = indices.iter().map(|i| values[*i]).collect();
                log_normal_pdf(&x, &vec![*mean; x.len()], chol)
            }
            PriorComponent::Bounds { index, lower, upper } => {
                let x = natural[*index];
                if x >= *lower && x <= *upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        };
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += lp;
        if c.natural_scale() {
            for i in c.indices() {
                if !jacobian_done[i] {
                    jacobian_done[i] = true;
                    total += transforms[i].log_jacobian(values[i]);
                }
            }
        }
    }
    total
}
