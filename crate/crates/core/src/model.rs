//! The interface a latent-variable model exposes to the samplers.

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};

/// Sizes of the parameter and latent spaces of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDimensions {
    pub n_obs: usize,
    pub theta_dim: usize,
    pub latent_dim_per_obs: usize,
    pub total_latent_dim: usize,
}

impl ModelDimensions {
    /// Dimensions for a model with one latent block of `latent_dim_per_obs`
    /// coordinates per observation.
    pub fn per_observation(n_obs: usize, theta_dim: usize, latent_dim_per_obs: usize) -> Result<Self> {
        if theta_dim == 0 || latent_dim_per_obs == 0 {
            return Err(HulaError::InvalidInput(
                "parameter and latent block dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            n_obs,
            theta_dim,
            latent_dim_per_obs,
            total_latent_dim: n_obs * latent_dim_per_obs,
        })
    }
}

/// The model parameter vector θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(HulaError::Domain(format!("parameter {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Latent vector z, stored as contiguous per-observation blocks z_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    values: Vec<f64>,
    block_len: usize,
}

impl LatentState {
    pub fn new(values: Vec<f64>, block_len: usize) -> Result<Self> {
        if block_len == 0 || !values.len().is_multiple_of(block_len) {
            return Err(HulaError::InvalidInput(format!(
                "latent length {} is not a multiple of block length {block_len}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HulaError::InvalidInput("latent state has non-finite entries".into()));
        }
        Ok(Self { values, block_len })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.values.len() / self.block_len
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[i * self.block_len..(i + 1) * self.block_len]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.block_len..(i + 1) * self.block_len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_layout(&self, dims: &ModelDimensions) -> Result<()> {
        if self.block_len != dims.latent_dim_per_obs {
            return Err(HulaError::DimensionMismatch {
                expected: dims.latent_dim_per_obs,
                got: self.block_len,
            });
        }
        if self.values.len() != dims.total_latent_dim {
            return Err(HulaError::DimensionMismatch {
                expected: dims.total_latent_dim,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// A latent-variable model p(y, z | θ) p(θ).
///
/// Gradients with respect to θ returned by [`augmented_gradient`] and
/// [`augmented_gradient_subset`] cover the likelihood only; the prior
/// gradient is added once by the sampler.
///
/// [`augmented_gradient`]: LatentModel::augmented_gradient
/// [`augmented_gradient_subset`]: LatentModel::augmented_gradient_subset
pub trait LatentModel: Sync {
    fn dimensions(&self) -> ModelDimensions;

    /// Validates θ against the model's support.
    fn check_parameters(&self, theta: &[f64]) -> Result<()> {
        let dims = self.dimensions();
        if theta.len() != dims.theta_dim {
            return Err(HulaError::DimensionMismatch {
                expected: dims.theta_dim,
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(HulaError::Domain("non-finite parameter".into()));
        }
        Ok(())
    }

    fn log_prior(&self, theta: &[f64]) -> Result<f64>;

    /// ∇_θ log p(θ) in closed form.
    fn log_prior_gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;

    /// log p(y, z | θ), dropping terms constant in both θ and z.
    fn augmented_log_likelihood(&self, theta: &[f64], z: &LatentState) -> Result<f64>;

    /// ∇_θ log p(y, z | θ).
    fn augmented_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>>;

    /// Σ_{i∈A} ∇_θ log p(y_i, z_i | θ), for models whose latents are
    /// independent across observations given θ.
    fn augmented_gradient_subset(&self, _theta: &[f64], _z: &LatentState, _indices: &[usize]) -> Result<Vec<f64>> {
        Err(HulaError::FactorizationUnsupported)
    }

    /// A constraint-satisfying starting point for the latent state.
    fn initial_latent(&self, theta: &[f64]) -> Result<LatentState>;

    /// Advances `state` by one update that leaves p(z | y, θ) invariant.
    /// Models with a direct conditional return an exact draw.
    fn sample_latents<R: Rng + ?Sized>(&self, theta: &[f64], state: &mut LatentState, rng: &mut R) -> Result<()>;

    /// Same as [`sample_latents`](LatentModel::sample_latents), restricted to
    /// the blocks in `indices`. Other blocks are left untouched.
    fn sample_latents_subset<R: Rng + ?Sized>(
        &self,
        _theta: &[f64],
        _state: &mut LatentState,
        _indices: &[usize],
        _rng: &mut R,
    ) -> Result<()> {
        Err(HulaError::FactorizationUnsupported)
    }

    /// ∇_z log p(θ, z | y), used by joint ULA.
    fn latent_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>>;

    /// Maps θ back into its canonical domain after an unconstrained move.
    fn wrap_parameters(&self, _theta: &mut [f64]) {}

    /// Maps an unconstrained latent move back into the support of p(z | y, θ).
    fn constrain_latents(&self, _z: &mut LatentState) {}
}

/// Checks that `indices` is a non-empty duplicate-free subset of `0..n`.
pub(crate) fn check_index_set(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(HulaError::InvalidInput("index set is empty".into()));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(HulaError::InvalidInput(format!("index {i} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(HulaError::InvalidInput(format!("duplicate index {i}")));
        }
    }
    Ok(())
}

impl LatentState {
    /// A state with no observations.
    pub fn empty(block_len: usize) -> Self {
        Self {
            values: Vec::new(),
            block_len: block_len.max(1),
        }
    }
}
