//! Exact MCMC baselines: data-augmentation Gibbs with blocked random-walk
//! Metropolis–Hastings for the probit angles, and a two-block Gibbs sampler
//! for the linear-Gaussian model.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};
use crate::mnp::data::ChoiceDataset;
use crate::mnp::model::{sweep_utilities, CovarianceCache, MnpModel, MnpPrior, ResidualStats};
use crate::mnp::spherical::MnpSpec;
use crate::model::{LatentModel, LatentState, ParameterVector};
use crate::oracle::LinearGaussianModel;
use crate::sampler::{ChainOutput, Draws, DIVERGENCE_THRESHOLD};

/// Acceptance band targeted while adapting proposal scales.
const TARGET_ACCEPTANCE: (f64, f64) = (0.25, 0.40);
/// Iterations per adaptation batch.
const ADAPT_BATCH: usize = 50;

/// Block layout and proposal scales of the angle updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhConfig {
    pub blocks: Vec<Vec<usize>>,
    pub proposal_sd: Vec<f64>,
    /// Proposal scales adapt during the first `adapt_until` iterations and
    /// stay fixed afterwards.
    pub adapt_until: usize,
}

impl MhConfig {
    /// Consecutive blocks of at most three angles.
    pub fn contiguous(angle_dim: usize, initial_sd: f64, adapt_until: usize) -> Self {
        let blocks: Vec<Vec<usize>> = (0..angle_dim)
            .collect::<Vec<_>>()
            .chunks(3)
            .map(|c| c.to_vec())
            .collect();
        let proposal_sd = vec![initial_sd; blocks.len()];
        Self {
            blocks,
            proposal_sd,
            adapt_until,
        }
    }

    pub fn validate(&self, angle_dim: usize) -> Result<()> {
        if self.blocks.len() != self.proposal_sd.len() {
            return Err(HulaError::InvalidInput("one proposal scale per block required".into()));
        }
        if self.proposal_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(HulaError::InvalidInput("proposal scales must be positive".into()));
        }
        let mut seen = vec![false; angle_dim];
        for &k in self.blocks.iter().flatten() {
            if k >= angle_dim || std::mem::replace(&mut seen[k], true) {
                return Err(HulaError::InvalidInput(format!(
                    "block index {k} is out of range or repeated"
                )));
            }
        }
        if seen.iter().any(|s| !s) || self.blocks.iter().any(|b| b.is_empty()) {
            return Err(HulaError::InvalidInput(
                "blocks must partition the angle indices".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub mh: MhConfig,
}

impl McmcConfig {
    /// Blocks of ≤ 3 angles, initial scale 0.05, adaptation over the burn-in.
    pub fn for_spec(spec: &MnpSpec, iterations: usize, burn_in: usize) -> Self {
        Self {
            iterations,
            burn_in,
            thin: 1,
            seed: 0,
            mh: MhConfig::contiguous(spec.angle_dim(), 0.05, burn_in),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(HulaError::InvalidInput("thin must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(HulaError::InvalidInput(
                "burn_in must be smaller than iterations".into(),
            ));
        }
        Ok(())
    }

    fn keeps(&self, k: usize) -> bool {
        k >= self.burn_in && (k - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOutput {
    pub chain: ChainOutput,
    /// Post-adaptation acceptance rate per block.
    pub acceptance_rates: Vec<f64>,
    /// Frozen proposal scale per block.
    pub proposal_sd: Vec<f64>,
    pub config: McmcConfig,
}

/// Normal full conditional of β given (z, Σ) under β ~ N(0, I/λ).
#[derive(Debug, Clone)]
pub struct BetaConditional {
    pub mean: DVector<f64>,
    /// Lower Cholesky factor of the conditional precision.
    pub precision_chol: DMatrix<f64>,
}

impl BetaConditional {
    pub fn new(z: &LatentState, data: &ChoiceDataset, cov: &CovarianceCache, prior_precision: f64) -> Result<Self> {
        let (j, r) = (data.alternatives(), data.regressors());
        if cov.dim() != j || z.block_len() != j || z.n_blocks() != data.len() {
            return Err(HulaError::DimensionMismatch {
                expected: data.len() * j,
                got: z.values().len(),
            });
        }
        let p = &cov.precision;
        let mut prec = DMatrix::<f64>::identity(r, r) * prior_precision;
        let mut rhs = DVector::<f64>::zeros(r);
        // P X_i, J×r
        let mut px = vec![0.0; j * r];
        for i in 0..data.len() {
            let xi = data.x_i(i);
            for a in 0..j {
                for c in 0..r {
                    px[a * r + c] = (0..j).map(|b| p[a * j + b] * xi[b * r + c]).sum();
                }
            }
            let zi = z.block(i);
            for c in 0..r {
                rhs[c] += (0..j).map(|a| px[a * r + c] * zi[a]).sum::<f64>();
                for d in c..r {
                    let v: f64 = (0..j).map(|a| xi[a * r + c] * px[a * r + d]).sum();
                    prec[(c, d)] += v;
                    if d != c {
                        prec[(d, c)] += v;
                    }
                }
            }
        }
        let chol = prec
            .cholesky()
            .ok_or_else(|| HulaError::Numerical("β conditional precision is not positive definite".into()))?;
        let mean = chol.solve(&rhs);
        Ok(Self {
            mean,
            precision_chol: chol.l(),
        })
    }

    /// mean + L⁻ᵀ ε.
    pub fn draw_with_noise(&self, noise: &[f64]) -> Vec<f64> {
        let eps = DVector::from_column_slice(noise);
        let shift = self
            .precision_chol
            .transpose()
            .solve_upper_triangular(&eps)
            .expect("Cholesky factor has a positive diagonal");
        (&self.mean + shift).iter().copied().collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.draw_with_noise(&noise)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = &self.precision_chol;
        (l * l.transpose()).try_inverse().expect("precision is invertible")
    }
}

/// Exact draw of β from its full conditional.
pub fn gibbs_beta<R: Rng + ?Sized>(
    z: &LatentState,
    data: &ChoiceDataset,
    cov: &CovarianceCache,
    prior_precision: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(BetaConditional::new(z, data, cov, prior_precision)?.draw(rng))
}

/// Gaussian random-walk Metropolis–Hastings update of the coordinates in
/// `block`. `current_log_target` is the log target at `x`; on acceptance it
/// is overwritten with the value at the new point.
pub fn mh_block_step<R, F>(
    x: &mut [f64],
    block: &[usize],
    proposal_sd: f64,
    current_log_target: &mut f64,
    log_target: F,
    rng: &mut R,
) -> bool
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut proposal = x.to_vec();
    for &k in block {
        proposal[k] += proposal_sd * rng.sample::<f64, _>(StandardNormal);
    }
    let candidate = log_target(&proposal);
    let log_u: f64 = rng.random::<f64>().ln();
    if candidate.is_finite() && log_u < candidate - *current_log_target {
        x.copy_from_slice(&proposal);
        *current_log_target = candidate;
        true
    } else {
        false
    }
}

/// log p(z | β, κ) p(κ) as a function of κ for fixed residual statistics.
pub fn kappa_log_target(kappa: &[f64], stats: &ResidualStats, spec: &MnpSpec, prior: &MnpPrior) -> f64 {
    match CovarianceCache::new(kappa, spec) {
        Ok(cov) => stats.log_likelihood(&cov) + prior.kappa_log_density(kappa),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// One blocked random-walk MH update of the angles given (z, β), through
/// their residual statistics. Returns whether the proposal was accepted.
pub fn mh_kappa_block<R: Rng + ?Sized>(
    kappa: &mut [f64],
    block: &[usize],
    stats: &ResidualStats,
    model: &MnpModel,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<bool> {
    let spec = model.spec();
    if kappa.len() != spec.angle_dim() {
        return Err(HulaError::DimensionMismatch {
            expected: spec.angle_dim(),
            got: kappa.len(),
        });
    }
    if block.iter().any(|&k| k >= kappa.len()) {
        return Err(HulaError::InvalidInput("block index out of range".into()));
    }
    let target = |k: &[f64]| kappa_log_target(k, stats, spec, model.prior());
    let mut current = target(kappa);
    Ok(mh_block_step(kappa, block, proposal_sd, &mut current, target, rng))
}

fn adapt_scale(sd: f64, rate: f64) -> f64 {
    if rate < TARGET_ACCEPTANCE.0 {
        sd * 0.8
    } else if rate > TARGET_ACCEPTANCE.1 {
        sd * 1.25
    } else {
        sd
    }
}

/// Data-augmentation MCMC for the probit model: per iteration a full Gibbs
/// sweep of the utilities, an exact β draw, and one MH step per angle block.
pub fn run_exact_mcmc<R: Rng + ?Sized>(
    model: &MnpModel,
    config: &McmcConfig,
    theta_init: &ParameterVector,
    rng: &mut R,
) -> Result<McmcOutput> {
    config.validate()?;
    let spec = *model.spec();
    config.mh.validate(spec.angle_dim())?;
    model.check_parameters(theta_init)?;
    let data = model.data();
    let r = spec.regressors;

    let mut beta = theta_init[..r].to_vec();
    let mut kappa = theta_init[r..].to_vec();
    let mut z = model.initial_latent(theta_init)?;
    let mut sd = config.mh.proposal_sd.clone();
    let nb = config.mh.blocks.len();
    let mut batch_accepts = vec![0usize; nb];
    let mut frozen_accepts = vec![0usize; nb];
    let mut frozen_iters = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    let rows = (config.iterations - config.burn_in) / config.thin;
    let mut draws = Draws::with_capacity(spec.theta_dim(), rows);
    let started = Instant::now();
    let mut latent_seconds = 0.0;
    let mut theta = vec![0.0; spec.theta_dim()];

    for k in 0..config.iterations {
        let cov = CovarianceCache::new(&kappa, &spec)?;
        let t0 = Instant::now();
        sweep_utilities(data, &beta, &cov, &mut z, None, rng)?;
        latent_seconds += t0.elapsed().as_secs_f64();

        beta = gibbs_beta(&z, data, &cov, model.prior().beta_precision, rng)?;
        let stats = ResidualStats::compute(data, &beta, &z, all.iter());
        let target = |kp: &[f64]| kappa_log_target(kp, &stats, &spec, model.prior());
        let mut current = target(&kappa);
        for (b, block) in config.mh.blocks.iter().enumerate() {
            if mh_block_step(&mut kappa, block, sd[b], &mut current, target, rng) {
                batch_accepts[b] += 1;
                if k >= config.mh.adapt_until {
                    frozen_accepts[b] += 1;
                }
            }
        }
        if k >= config.mh.adapt_until {
            frozen_iters += 1;
        } else if (k + 1) % ADAPT_BATCH == 0 {
            for (s, acc) in sd.iter_mut().zip(batch_accepts.iter_mut()) {
                *s = adapt_scale(*s, *acc as f64 / ADAPT_BATCH as f64);
                *acc = 0;
            }
        }

        theta[..r].copy_from_slice(&beta);
        theta[r..].copy_from_slice(&kappa);
        if theta.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            let chain = finish(draws, z, theta, k, started, latent_seconds);
            return Err(HulaError::Divergence {
                iteration: k,
                partial: Box::new(chain),
            });
        }
        if config.keeps(k) {
            draws.push(&theta)?;
        }
    }
    let acceptance_rates = frozen_accepts
        .iter()
        .map(|&a| {
            if frozen_iters == 0 {
                f64::NAN
            } else {
                a as f64 / frozen_iters as f64
            }
        })
        .collect();
    Ok(McmcOutput {
        chain: finish(draws, z, theta, config.iterations, started, latent_seconds),
        acceptance_rates,
        proposal_sd: sd,
        config: config.clone(),
    })
}

fn finish(
    draws: Draws,
    z: LatentState,
    theta: Vec<f64>,
    iterations: usize,
    started: Instant,
    latent_seconds: f64,
) -> ChainOutput {
    let per = |s: f64| if iterations == 0 { 0.0 } else { s / iterations as f64 };
    ChainOutput {
        draws,
        latent_draws: None,
        final_latent: z,
        final_theta: theta,
        iterations_run: iterations,
        wall_time_per_iteration: per(started.elapsed().as_secs_f64()),
        latent_time_per_iteration: per(latent_seconds),
        config: None,
    }
}

/// Two-block Gibbs sampler for the linear-Gaussian model: z | θ, y exactly,
/// then θ | z from its conjugate Normal conditional.
pub fn run_oracle_gibbs<R: Rng + ?Sized>(
    model: &LinearGaussianModel,
    iterations: usize,
    burn_in: usize,
    theta_init: f64,
    rng: &mut R,
) -> Result<ChainOutput> {
    if burn_in >= iterations {
        return Err(HulaError::InvalidInput(
            "burn_in must be smaller than iterations".into(),
        ));
    }
    let mut theta = [theta_init];
    let mut z = model.initial_latent(&theta)?;
    let vz = model.sigma_z() * model.sigma_z();
    let n = model.y().len() as f64;
    let precision = model.prior_var().recip() + n / vz;
    let var = precision.recip();
    let mut draws = Draws::with_capacity(1, iterations - burn_in);
    let started = Instant::now();
    let mut latent_seconds = 0.0;
    for k in 0..iterations {
        let t0 = Instant::now();
        model.sample_latents(&theta, &mut z, rng)?;
        latent_seconds += t0.elapsed().as_secs_f64();
        let sum_z: f64 = z.values().iter().sum();
        let prior_term = if model.prior_var().is_finite() {
            model.prior_mean() / model.prior_var()
        } else {
            0.0
        };
        let mean = var * (prior_term + sum_z / vz);
        theta[0] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if k >= burn_in {
            draws.push(&theta)?;
        }
    }
    Ok(finish(draws, z, theta.to_vec(), iterations, started, latent_seconds))
}
