//! Preconditioned HULA main loop and the joint ULA comparator.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};
use crate::gradient::{fisher_gradient, posterior_gradient, subsampled_fisher_gradient};
use crate::model::{LatentModel, LatentState, ParameterVector};

/// Any coordinate beyond this magnitude aborts the chain.
pub const DIVERGENCE_THRESHOLD: f64 = 1e10;

/// Number of observations entering each gradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsample {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub tau: f64,
    /// Diagonal of the preconditioner U.
    pub precond: Vec<f64>,
    /// Latent draws per gradient estimate (S).
    pub draws_per_step: usize,
    pub subsample: Subsample,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
}

impl SamplerConfig {
    /// τ = 1/n, U = I, S = 1, no subsampling, no thinning.
    pub fn with_defaults(n_obs: usize, theta_dim: usize, iterations: usize, burn_in: usize) -> Self {
        Self {
            tau: 1.0 / n_obs.max(1) as f64,
            precond: vec![1.0; theta_dim],
            draws_per_step: 1,
            subsample: Subsample::Full,
            iterations,
            burn_in,
            seed: 0,
            thin: 1,
        }
    }

    pub fn validate(&self, theta_dim: usize) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(HulaError::InvalidInput(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.precond.len() != theta_dim {
            return Err(HulaError::DimensionMismatch {
                expected: theta_dim,
                got: self.precond.len(),
            });
        }
        if let Some(u) = self.precond.iter().find(|u| !(**u > 0.0 && u.is_finite())) {
            return Err(HulaError::InvalidInput(format!(
                "preconditioner entries must be positive, got {u}"
            )));
        }
        if self.draws_per_step == 0 {
            return Err(HulaError::InvalidInput("S must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(HulaError::InvalidInput("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(HulaError::InvalidInput(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if let Subsample::Size(0) = self.subsample {
            return Err(HulaError::InvalidInput("subsample size must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of rows kept after burn-in and thinning.
    pub fn retained_rows(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn keeps(&self, k: usize) -> bool {
        k >= self.burn_in && (k - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Row-major matrix of draws, one row per retained iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Draws {
    dim: usize,
    values: Vec<f64>,
}

impl Draws {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self {
            dim,
            values: Vec::with_capacity(dim * rows),
        }
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut draws = Self::new(dim);
        for row in rows {
            draws.push(&row)?;
        }
        Ok(draws)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(HulaError::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|j| self.column(j)).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.n_rows().max(1) as f64;
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Result of one sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Draws,
    /// Retained latent draws (joint ULA only, when requested).
    pub latent_draws: Option<Draws>,
    pub final_latent: LatentState,
    pub final_theta: Vec<f64>,
    pub iterations_run: usize,
    pub wall_time_per_iteration: f64,
    pub latent_time_per_iteration: f64,
    /// Settings of Langevin runs; `None` for the exact-MCMC baselines.
    pub config: Option<SamplerConfig>,
}

/// One preconditioned Langevin update:
/// θ + τ·U·grad + √(2τ)·U^{1/2}·noise.
pub fn hula_step(
    theta: &ParameterVector,
    grad: &[f64],
    config: &SamplerConfig,
    noise: &[f64],
) -> Result<ParameterVector> {
    let d = theta.len();
    for len in [grad.len(), noise.len(), config.precond.len()] {
        if len != d {
            return Err(HulaError::DimensionMismatch { expected: d, got: len });
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(HulaError::Numerical("non-finite gradient".into()));
    }
    let noise_scale = (2.0 * config.tau).sqrt();
    let next: Vec<f64> = theta
        .iter()
        .zip(grad)
        .zip(noise)
        .zip(&config.precond)
        .map(|(((t, g), e), u)| t + config.tau * u * g + noise_scale * u.sqrt() * e)
        .collect();
    Ok(ParameterVector::from(next))
}

fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, buf: &mut [f64]) {
    for e in buf.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

fn out_of_bounds(values: &[f64]) -> bool {
    values.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD)
}

struct ChainRecorder {
    draws: Draws,
    latent_draws: Option<Draws>,
    started: Instant,
    latent_seconds: f64,
}

impl ChainRecorder {
    fn finish(
        self,
        final_theta: Vec<f64>,
        final_latent: LatentState,
        iterations_run: usize,
        config: &SamplerConfig,
    ) -> ChainOutput {
        let per = |s: f64| {
            if iterations_run == 0 {
                0.0
            } else {
                s / iterations_run as f64
            }
        };
        ChainOutput {
            draws: self.draws,
            latent_draws: self.latent_draws,
            final_latent,
            final_theta,
            iterations_run,
            wall_time_per_iteration: per(self.started.elapsed().as_secs_f64()),
            latent_time_per_iteration: per(self.latent_seconds),
            config: Some(config.clone()),
        }
    }
}

/// Runs the hybrid unadjusted Langevin algorithm.
///
/// Each iteration refreshes the carried latent state, forms a Fisher gradient
/// estimate (subsampled when `config.subsample` is a size), adds the prior
/// gradient and takes one preconditioned Langevin step.
pub fn run_hula<M, R>(
    model: &M,
    config: &SamplerConfig,
    theta_init: &ParameterVector,
    rng: &mut R,
) -> Result<ChainOutput>
where
    M: LatentModel,
    R: Rng + ?Sized,
{
    let dims = model.dimensions();
    config.validate(dims.theta_dim)?;
    model.check_parameters(theta_init)?;
    if let Subsample::Size(m) = config.subsample {
        if m > dims.n_obs {
            return Err(HulaError::InvalidInput(format!(
                "subsample size {m} exceeds {} observations",
                dims.n_obs
            )));
        }
    }

    let mut theta = theta_init.clone();
    let mut latent = model.initial_latent(&theta)?;
    let mut noise = vec![0.0; dims.theta_dim];
    let mut rec = ChainRecorder {
        draws: Draws::with_capacity(dims.theta_dim, config.retained_rows()),
        latent_draws: None,
        started: Instant::now(),
        latent_seconds: 0.0,
    };

    for k in 0..config.iterations {
        let estimate = match config.subsample {
            Subsample::Size(m) if dims.n_obs > 0 => {
                subsampled_fisher_gradient(model, &theta, config.draws_per_step, m, &mut latent, rng)?
            }
            _ => fisher_gradient(model, &theta, config.draws_per_step, &mut latent, rng)?,
        };
        rec.latent_seconds += estimate.latent_seconds;
        let grad = posterior_gradient(model, &theta, &estimate)?;
        fill_standard_normal(rng, &mut noise);
        let step = hula_step(&theta, &grad, config, &noise);
        let diverged = match step {
            Ok(mut next) => {
                model.wrap_parameters(&mut next);
                let bad = out_of_bounds(&next);
                if !bad {
                    theta = next;
                }
                bad
            }
            Err(HulaError::Numerical(_)) => true,
            Err(e) => return Err(e),
        };
        if diverged {
            let partial = rec.finish(theta.into_inner(), latent, k, config);
            return Err(HulaError::Divergence {
                iteration: k,
                partial: Box::new(partial),
            });
        }
        if config.keeps(k) {
            rec.draws.push(&theta)?;
        }
    }
    Ok(rec.finish(theta.into_inner(), latent, config.iterations, config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointUlaOptions {
    pub retain_latents: bool,
    /// Multiplies the injected Gaussian noise; 0 turns the chain into
    /// gradient ascent on the joint posterior.
    pub noise_scale: f64,
}

impl Default for JointUlaOptions {
    fn default() -> Self {
        Self {
            retain_latents: false,
            noise_scale: 1.0,
        }
    }
}

/// Unadjusted Langevin on the stacked state (θ, z).
///
/// The θ block is preconditioned by `config.precond`; the latent block uses
/// the scalar step τ. After every step latents are mapped back into the
/// support of p(z | y, θ) by [`LatentModel::constrain_latents`].
pub fn run_joint_ula<M, R>(
    model: &M,
    config: &SamplerConfig,
    theta_init: &ParameterVector,
    z_init: &LatentState,
    options: JointUlaOptions,
    rng: &mut R,
) -> Result<ChainOutput>
where
    M: LatentModel,
    R: Rng + ?Sized,
{
    let dims = model.dimensions();
    config.validate(dims.theta_dim)?;
    model.check_parameters(theta_init)?;
    z_init.check_layout(&dims)?;

    let tau = config.tau;
    let scale = (2.0 * tau).sqrt() * options.noise_scale;
    let mut theta: Vec<f64> = theta_init.to_vec();
    let mut latent = z_init.clone();
    let mut rec = ChainRecorder {
        draws: Draws::with_capacity(dims.theta_dim, config.retained_rows()),
        latent_draws: options.retain_latents.then(|| Draws::new(dims.total_latent_dim)),
        started: Instant::now(),
        latent_seconds: 0.0,
    };

    for k in 0..config.iterations {
        let mut g_theta = model.augmented_gradient(&theta, &latent)?;
        let prior = model.log_prior_gradient(&theta)?;
        g_theta.iter_mut().zip(&prior).for_each(|(g, p)| *g += p);
        let start = Instant::now();
        let g_z = model.latent_gradient(&theta, &latent)?;
        let mut diverged = out_of_bounds(&g_theta) || out_of_bounds(&g_z);
        if !diverged {
            for ((t, g), u) in theta.iter_mut().zip(&g_theta).zip(&config.precond) {
                let e: f64 = rng.sample(StandardNormal);
                *t += tau * u * g + scale * u.sqrt() * e;
            }
            for (z, g) in latent.values_mut().iter_mut().zip(&g_z) {
                let e: f64 = rng.sample(StandardNormal);
                *z += tau * g + scale * e;
            }
            model.wrap_parameters(&mut theta);
            model.constrain_latents(&mut latent);
            diverged = out_of_bounds(&theta) || out_of_bounds(latent.values());
        }
        rec.latent_seconds += start.elapsed().as_secs_f64();
        if diverged {
            let partial = rec.finish(theta, latent, k, config);
            return Err(HulaError::Divergence {
                iteration: k,
                partial: Box::new(partial),
            });
        }
        if config.keeps(k) {
            rec.draws.push(&theta)?;
            if let Some(ld) = rec.latent_draws.as_mut() {
                ld.push(latent.values())?;
            }
        }
    }
    Ok(rec.finish(theta, latent, config.iterations, config))
}
