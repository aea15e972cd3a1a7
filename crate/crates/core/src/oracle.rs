//! Linear-Gaussian latent model with a closed-form marginal posterior.
//!
//! z_i ~ N(θ, σ_z²), y_i | z_i ~ N(z_i, σ_y²), θ ~ N(μ₀, v₀).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};
use crate::model::{check_index_set, LatentModel, LatentState, ModelDimensions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianModel {
    y: Vec<f64>,
    sigma_z: f64,
    sigma_y: f64,
    prior_mean: f64,
    prior_var: f64,
}

impl LinearGaussianModel {
    pub fn new(y: Vec<f64>, sigma_z: f64, sigma_y: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        if !(sigma_z > 0.0 && sigma_z.is_finite()) {
            return Err(HulaError::InvalidInput(format!(
                "sigma_z must be positive, got {sigma_z}"
            )));
        }
        if !(sigma_y > 0.0 && sigma_y.is_finite()) {
            return Err(HulaError::InvalidInput(format!(
                "sigma_y must be positive, got {sigma_y}"
            )));
        }
        if !(prior_var > 0.0) || prior_var.is_nan() {
            return Err(HulaError::InvalidInput(format!(
                "prior_var must be positive, got {prior_var}"
            )));
        }
        if !prior_mean.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(HulaError::InvalidInput("non-finite data or prior mean".into()));
        }
        Ok(Self {
            y,
            sigma_z,
            sigma_y,
            prior_mean,
            prior_var,
        })
    }

    /// Draws `n` observations from the generative model at a fixed θ.
    pub fn simulate<R: Rng + ?Sized>(n: usize, theta: f64, sigma_z: f64, sigma_y: f64, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z = theta + sigma_z * rng.sample::<f64, _>(StandardNormal);
                z + sigma_y * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    /// Variance of y_i given θ with z_i integrated out.
    pub fn marginal_obs_var(&self) -> f64 {
        self.sigma_z * self.sigma_z + self.sigma_y * self.sigma_y
    }

    /// Mean and variance of p(z_i | y_i, θ).
    pub fn latent_conditional(&self, theta: f64, y_i: f64) -> (f64, f64) {
        let pz = 1.0 / (self.sigma_z * self.sigma_z);
        let py = 1.0 / (self.sigma_y * self.sigma_y);
        let var = 1.0 / (pz + py);
        (var * (theta * pz + y_i * py), var)
    }

    /// Conjugate posterior (mean, variance) of θ.
    pub fn exact_posterior(&self) -> (f64, f64) {
        let s2 = self.marginal_obs_var();
        let precision = self.prior_var.recip() + self.y.len() as f64 / s2;
        let sum_y: f64 = self.y.iter().sum();
        let var = precision.recip();
        (var * (self.prior_mean / self.prior_var + sum_y / s2), var)
    }

    /// ∇_θ log ∫ p(y, z | θ) dz.
    pub fn marginal_likelihood_gradient(&self, theta: f64) -> f64 {
        self.y.iter().map(|&y| y - theta).sum::<f64>() / self.marginal_obs_var()
    }

    fn theta(&self, theta: &[f64]) -> Result<f64> {
        self.check_parameters(theta)?;
        Ok(theta[0])
    }
}

impl LatentModel for LinearGaussianModel {
    fn dimensions(&self) -> ModelDimensions {
        ModelDimensions {
            n_obs: self.y.len(),
            theta_dim: 1,
            latent_dim_per_obs: 1,
            total_latent_dim: self.y.len(),
        }
    }

    fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        let t = self.theta(theta)?;
        if self.prior_var.is_infinite() {
            return Ok(0.0);
        }
        let d = t - self.prior_mean;
        Ok(-0.5 * d * d / self.prior_var)
    }

    fn log_prior_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let t = self.theta(theta)?;
        Ok(vec![-(t - self.prior_mean) / self.prior_var])
    }

    fn augmented_log_likelihood(&self, theta: &[f64], z: &LatentState) -> Result<f64> {
        let t = self.theta(theta)?;
        z.check_layout(&self.dimensions())?;
        let vz = self.sigma_z * self.sigma_z;
        let vy = self.sigma_y * self.sigma_y;
        Ok(self
            .y
            .iter()
            .zip(z.values())
            .map(|(&y, &zi)| -0.5 * (zi - t) * (zi - t) / vz - 0.5 * (y - zi) * (y - zi) / vy)
            .sum())
    }

    fn augmented_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>> {
        let t = self.theta(theta)?;
        z.check_layout(&self.dimensions())?;
        let g = z.values().iter().map(|&zi| zi - t).sum::<f64>() / (self.sigma_z * self.sigma_z);
        Ok(vec![g])
    }

    fn augmented_gradient_subset(&self, theta: &[f64], z: &LatentState, indices: &[usize]) -> Result<Vec<f64>> {
        let t = self.theta(theta)?;
        z.check_layout(&self.dimensions())?;
        check_index_set(indices, self.y.len())?;
        let zv = z.values();
        let g = indices.iter().map(|&i| zv[i] - t).sum::<f64>() / (self.sigma_z * self.sigma_z);
        Ok(vec![g])
    }

    fn initial_latent(&self, _theta: &[f64]) -> Result<LatentState> {
        if self.y.is_empty() {
            return Ok(LatentState::empty(1));
        }
        LatentState::new(self.y.clone(), 1)
    }

    fn sample_latents<R: Rng + ?Sized>(&self, theta: &[f64], state: &mut LatentState, rng: &mut R) -> Result<()> {
        let t = self.theta(theta)?;
        state.check_layout(&self.dimensions())?;
        for (z, &y) in state.values_mut().iter_mut().zip(&self.y) {
            let (mean, var) = self.latent_conditional(t, y);
            *z = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(())
    }

    fn sample_latents_subset<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        state: &mut LatentState,
        indices: &[usize],
        rng: &mut R,
    ) -> Result<()> {
        let t = self.theta(theta)?;
        state.check_layout(&self.dimensions())?;
        check_index_set(indices, self.y.len())?;
        let zv = state.values_mut();
        for &i in indices {
            let (mean, var) = self.latent_conditional(t, self.y[i]);
            zv[i] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(())
    }

    fn latent_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>> {
        let t = self.theta(theta)?;
        z.check_layout(&self.dimensions())?;
        let vz = self.sigma_z * self.sigma_z;
        let vy = self.sigma_y * self.sigma_y;
        Ok(z.values()
            .iter()
            .zip(&self.y)
            .map(|(&zi, &y)| -(zi - t) / vz + (y - zi) / vy)
            .collect())
    }
}
