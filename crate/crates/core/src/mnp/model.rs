//! Multinomial probit model with factor covariance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{linear_index, ChoiceDataset};
use super::spherical::{
    covariance_from_unit_vector, equicorrelated_angles, unit_vector, unit_vector_jacobian, FactorCovariance, MnpSpec,
};
use super::truncnorm::{sample_above, sample_below};
use crate::error::{HulaError, Result};
use crate::model::{check_index_set, LatentModel, LatentState, ModelDimensions};

/// Minimum number of observations handed to one worker during a sweep.
const SWEEP_MIN_CHUNK: usize = 256;

/// Category implied by a utility vector: 0 when every utility is negative,
/// otherwise the 1-based index of the largest one (lowest index on ties).
pub fn outcome_from_utilities(z_i: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &v) in z_i.iter().enumerate() {
        if v > best_val {
            best = j;
            best_val = v;
        }
    }
    if best_val < 0.0 {
        0
    } else {
        best + 1
    }
}

/// θ = (β, κ) split into its blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnpParams {
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl MnpParams {
    pub fn from_theta(theta: &[f64], spec: &MnpSpec) -> Result<Self> {
        if theta.len() != spec.theta_dim() {
            return Err(HulaError::DimensionMismatch {
                expected: spec.theta_dim(),
                got: theta.len(),
            });
        }
        let (beta, kappa) = theta.split_at(spec.regressors);
        Ok(Self {
            beta: beta.to_vec(),
            kappa: kappa.to_vec(),
        })
    }

    pub fn to_theta(&self) -> Vec<f64> {
        let mut theta = self.beta.clone();
        theta.extend_from_slice(&self.kappa);
        theta
    }

    /// β = 0 and κ at the equicorrelated angles.
    pub fn default_start(spec: &MnpSpec) -> Self {
        Self {
            beta: vec![0.0; spec.regressors],
            kappa: equicorrelated_angles(spec),
        }
    }
}

/// Σ(κ) with its Cholesky factor, precision and log-determinant.
#[derive(Debug, Clone)]
pub struct CovarianceCache {
    pub factors: FactorCovariance,
    /// Lower Cholesky factor of Σ.
    pub chol: DMatrix<f64>,
    /// Σ⁻¹, row-major.
    pub precision: Vec<f64>,
    pub log_det: f64,
    /// κ and v(κ), kept for the chain rule.
    pub kappa: Vec<f64>,
    pub unit: Vec<f64>,
}

impl CovarianceCache {
    pub fn new(kappa: &[f64], spec: &MnpSpec) -> Result<Self> {
        if kappa.len() != spec.angle_dim() {
            return Err(HulaError::DimensionMismatch {
                expected: spec.angle_dim(),
                got: kappa.len(),
            });
        }
        let unit = unit_vector(kappa);
        let factors = covariance_from_unit_vector(&unit, spec);
        Self::from_factors(factors, kappa.to_vec(), unit)
    }

    fn from_factors(factors: FactorCovariance, kappa: Vec<f64>, unit: Vec<f64>) -> Result<Self> {
        let chol = factors
            .sigma
            .clone()
            .cholesky()
            .ok_or_else(|| HulaError::Numerical("Σ(κ) is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        let j = inv.nrows();
        let precision = (0..j * j).map(|k| inv[(k / j, k % j)]).collect();
        if !log_det.is_finite() {
            return Err(HulaError::Numerical("Σ(κ) is singular".into()));
        }
        Ok(Self {
            chol: chol.l(),
            factors,
            precision,
            log_det,
            kappa,
            unit,
        })
    }

    /// Covariance built directly from a matrix (no angle information).
    pub fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        let j = sigma.nrows();
        let factors = FactorCovariance {
            b: DMatrix::zeros(j, 0),
            d_diag: Vec::new(),
            sigma,
        };
        Self::from_factors(factors, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.factors.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.factors.sigma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnpPrior {
    /// β ~ N(0, I / beta_precision).
    pub beta_precision: f64,
    /// κ ~ N(kappa_mean, kappa_sd² I).
    pub kappa_mean: Vec<f64>,
    pub kappa_sd: f64,
}

impl MnpPrior {
    /// β precision 10 and unit-sd angles centred on the equicorrelated angles.
    pub fn default_for(spec: &MnpSpec) -> Self {
        Self {
            beta_precision: 10.0,
            kappa_mean: equicorrelated_angles(spec),
            kappa_sd: 1.0,
        }
    }

    pub fn log_density(&self, beta: &[f64], kappa: &[f64]) -> f64 {
        let b: f64 = beta.iter().map(|v| v * v).sum();
        let k: f64 = kappa.iter().zip(&self.kappa_mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * self.beta_precision * b - 0.5 * k / (self.kappa_sd * self.kappa_sd)
    }

    pub fn kappa_log_density(&self, kappa: &[f64]) -> f64 {
        let k: f64 = kappa.iter().zip(&self.kappa_mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * k / (self.kappa_sd * self.kappa_sd)
    }
}

/// Sufficient statistics of Σ_i log φ_J(z_i; X_iβ, Σ) over an index set.
#[derive(Debug, Clone)]
pub struct ResidualStats {
    pub count: usize,
    /// Σ_i (z_i − X_iβ)(z_i − X_iβ)ᵀ, row-major J×J.
    pub scatter: Vec<f64>,
}

impl ResidualStats {
    pub fn compute<'a>(
        data: &ChoiceDataset,
        beta: &[f64],
        z: &LatentState,
        indices: impl Iterator<Item = &'a usize>,
    ) -> Self {
        let j = data.alternatives();
        let mut scatter = vec![0.0; j * j];
        let mut resid = vec![0.0; j];
        let mut count = 0;
        for &i in indices {
            linear_index(data.x_i(i), beta, &mut resid);
            resid.iter_mut().zip(z.block(i)).for_each(|(r, zi)| *r = zi - *r);
            for a in 0..j {
                for b in 0..j {
                    scatter[a * j + b] += resid[a] * resid[b];
                }
            }
            count += 1;
        }
        Self { count, scatter }
    }

    /// Σ_i log φ_J(z_i; X_iβ, Σ) without the 2π constant.
    pub fn log_likelihood(&self, cov: &CovarianceCache) -> f64 {
        let quad: f64 = self.scatter.iter().zip(&cov.precision).map(|(s, p)| s * p).sum();
        -0.5 * self.count as f64 * cov.log_det - 0.5 * quad
    }
}

/// The multinomial probit model p(y, z | β, κ) p(β) p(κ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnpModel {
    spec: MnpSpec,
    data: ChoiceDataset,
    prior: MnpPrior,
}

impl MnpModel {
    pub fn new(spec: MnpSpec, data: ChoiceDataset) -> Result<Self> {
        let prior = MnpPrior::default_for(&spec);
        Self::with_prior(spec, data, prior)
    }

    pub fn with_prior(spec: MnpSpec, data: ChoiceDataset, prior: MnpPrior) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(HulaError::InvalidInput(
                "the probit model needs at least one observation".into(),
            ));
        }
        if data.alternatives() != spec.alternatives || data.regressors() != spec.regressors {
            return Err(HulaError::InvalidInput(format!(
                "dataset is J={} r={}, model expects J={} r={}",
                data.alternatives(),
                data.regressors(),
                spec.alternatives,
                spec.regressors
            )));
        }
        if prior.kappa_mean.len() != spec.angle_dim() || !(prior.beta_precision > 0.0) || !(prior.kappa_sd > 0.0) {
            return Err(HulaError::InvalidInput("invalid prior".into()));
        }
        Ok(Self { spec, data, prior })
    }

    pub fn spec(&self) -> &MnpSpec {
        &self.spec
    }

    pub fn data(&self) -> &ChoiceDataset {
        &self.data
    }

    pub fn prior(&self) -> &MnpPrior {
        &self.prior
    }

    fn split<'a>(&self, theta: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        self.check_parameters(theta)?;
        Ok(theta.split_at(self.spec.regressors))
    }

    /// Likelihood gradient over `indices` (all observations when `None`).
    fn gradient_over(&self, theta: &[f64], z: &LatentState, indices: Option<&[usize]>) -> Result<Vec<f64>> {
        let (beta, kappa) = self.split(theta)?;
        z.check_layout(&self.dimensions())?;
        let cov = CovarianceCache::new(kappa, &self.spec)?;
        let (j, r) = (self.spec.alternatives, self.spec.regressors);
        let p = &cov.precision;

        let mut grad = vec![0.0; self.spec.theta_dim()];
        let mut scatter = vec![0.0; j * j];
        let mut resid = vec![0.0; j];
        let mut weighted = vec![0.0; j];
        let mut count = 0usize;
        let mut visit = |i: usize| {
            let xi = self.data.x_i(i);
            linear_index(xi, beta, &mut resid);
            resid.iter_mut().zip(z.block(i)).for_each(|(e, zi)| *e = zi - *e);
            for a in 0..j {
                weighted[a] = (0..j).map(|b| p[a * j + b] * resid[b]).sum();
                for b in 0..j {
                    scatter[a * j + b] += resid[a] * resid[b];
                }
            }
            for (a, row) in xi.chunks_exact(r).enumerate() {
                grad[..r].iter_mut().zip(row).for_each(|(g, x)| *g += x * weighted[a]);
            }
            count += 1;
        };
        match indices {
            Some(idx) => idx.iter().for_each(|&i| visit(i)),
            None => (0..self.data.len()).for_each(&mut visit),
        }

        let kappa_grad = self.kappa_chain_rule(&cov, &scatter, count);
        grad[r..].copy_from_slice(&kappa_grad);
        Ok(grad)
    }

    /// ∂/∂κ of Σ_i log φ_J given the residual scatter S and count m:
    /// G = ½(Σ⁻¹SΣ⁻¹ − mΣ⁻¹), ∂/∂B = 2GB, ∂/∂d_j = 2G_jj d_j, then through v(κ).
    fn kappa_chain_rule(&self, cov: &CovarianceCache, scatter: &[f64], count: usize) -> Vec<f64> {
        let (j, pf) = (self.spec.alternatives, self.spec.factors);
        let p = DMatrix::from_row_slice(j, j, &cov.precision);
        let s = DMatrix::from_row_slice(j, j, scatter);
        let g = (&p * s * &p - &p * count as f64) * 0.5;
        let gb = &g * &cov.factors.b * 2.0;
        let v = &cov.unit;
        let mut grad_v = vec![0.0; j * (pf + 1)];
        for c in 0..pf {
            for a in 0..j {
                grad_v[c * j + a] = gb[(a, c)];
            }
        }
        for a in 0..j {
            grad_v[j * pf + a] = 2.0 * g[(a, a)] * v[j * pf + a];
        }
        let jac = unit_vector_jacobian(&cov.kappa);
        (0..jac.ncols())
            .map(|m| (0..jac.nrows()).map(|k| jac[(k, m)] * grad_v[k]).sum())
            .collect()
    }

    /// One Gibbs sweep over the latent utilities at θ.
    pub fn gibbs_sweep<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        z: &mut LatentState,
        indices: Option<&[usize]>,
        rng: &mut R,
    ) -> Result<()> {
        let (beta, kappa) = self.split(theta)?;
        let cov = CovarianceCache::new(kappa, &self.spec)?;
        sweep_utilities(&self.data, beta, &cov, z, indices, rng)
    }
}

/// Checks y_i against z_i for every observation in `indices`.
pub fn check_constraints(data: &ChoiceDataset, z: &LatentState, indices: Option<&[usize]>) -> Result<()> {
    let check = |i: usize| {
        if outcome_from_utilities(z.block(i)) == data.y()[i] {
            Ok(())
        } else {
            Err(HulaError::ConstraintViolation { observation: i })
        }
    };
    match indices {
        Some(idx) => idx.iter().try_for_each(|&i| check(i)),
        None => (0..data.len()).try_for_each(check),
    }
}

/// One sweep of univariate truncated-normal updates of z_ij, j = 1…J, for
/// every observation in `indices` (all when `None`), holding (β, Σ) fixed.
///
/// Each observation draws from its own ChaCha stream keyed by a sweep seed
/// taken from `rng`, so results do not depend on the thread count.
pub fn sweep_utilities<R: Rng + ?Sized>(
    data: &ChoiceDataset,
    beta: &[f64],
    cov: &CovarianceCache,
    z: &mut LatentState,
    indices: Option<&[usize]>,
    rng: &mut R,
) -> Result<()> {
    let j = data.alternatives();
    if z.block_len() != j || z.n_blocks() != data.len() {
        return Err(HulaError::DimensionMismatch {
            expected: data.len() * j,
            got: z.values().len(),
        });
    }
    if let Some(idx) = indices {
        check_index_set(idx, data.len())?;
    }
    check_constraints(data, z, indices)?;
    let key: [u8; 32] = rng.random();
    let update = |mu: &mut Vec<f64>, (i, zi): (usize, &mut [f64])| {
        let mut stream = ChaCha8Rng::from_seed(key);
        stream.set_stream(i as u64);
        update_observation(data.x_i(i), data.y()[i], beta, cov, zi, mu, &mut stream);
    };
    let init = || vec![0.0; j];
    match indices {
        None => z
            .values_mut()
            .par_chunks_mut(j)
            .enumerate()
            .with_min_len(SWEEP_MIN_CHUNK)
            .for_each_init(init, update),
        Some(idx) => {
            let mut selected = vec![false; data.len()];
            idx.iter().for_each(|&i| selected[i] = true);
            let mut blocks: Vec<(usize, &mut [f64])> = z
                .values_mut()
                .chunks_mut(j)
                .enumerate()
                .filter(|(i, _)| selected[*i])
                .collect();
            blocks
                .par_iter_mut()
                .with_min_len(SWEEP_MIN_CHUNK)
                .for_each_init(init, |mu, (i, zi)| update(mu, (*i, &mut **zi)));
        }
    }
    Ok(())
}

fn update_observation<R: Rng + ?Sized>(
    x_i: &[f64],
    y_i: usize,
    beta: &[f64],
    cov: &CovarianceCache,
    z_i: &mut [f64],
    mu: &mut [f64],
    rng: &mut R,
) {
    let j = z_i.len();
    let p = &cov.precision;
    linear_index(x_i, beta, mu);
    for a in 0..j {
        let p_aa = p[a * j + a];
        let shift: f64 = (0..j)
            .filter(|&b| b != a)
            .map(|b| p[a * j + b] * (z_i[b] - mu[b]))
            .sum();
        let mean = mu[a] - shift / p_aa;
        let sd = p_aa.sqrt().recip();
        z_i[a] = if y_i == 0 {
            sample_below(mean, sd, 0.0, rng)
        } else if y_i == a + 1 {
            let lower = z_i
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .fold(0.0f64, |m, (_, &v)| m.max(v));
            sample_above(mean, sd, lower, rng)
        } else {
            // The chosen alternative must stay on top. Ties resolve toward the
            // lower index, so an alternative before the chosen one must stay
            // strictly below it.
            sample_below(mean, sd, z_i[y_i - 1], rng)
        };
    }
}

impl LatentModel for MnpModel {
    fn dimensions(&self) -> ModelDimensions {
        let j = self.spec.alternatives;
        ModelDimensions {
            n_obs: self.data.len(),
            theta_dim: self.spec.theta_dim(),
            latent_dim_per_obs: j,
            total_latent_dim: self.data.len() * j,
        }
    }

    fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        let (beta, kappa) = self.split(theta)?;
        Ok(self.prior.log_density(beta, kappa))
    }

    fn log_prior_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let (beta, kappa) = self.split(theta)?;
        let inv_var = (self.prior.kappa_sd * self.prior.kappa_sd).recip();
        Ok(beta
            .iter()
            .map(|b| -self.prior.beta_precision * b)
            .chain(
                kappa
                    .iter()
                    .zip(&self.prior.kappa_mean)
                    .map(|(k, m)| -(k - m) * inv_var),
            )
            .collect())
    }

    /// Σ_i log φ_J(z_i; X_iβ, Σ(κ)), or −∞ when some z_i contradicts y_i.
    fn augmented_log_likelihood(&self, theta: &[f64], z: &LatentState) -> Result<f64> {
        let (beta, kappa) = self.split(theta)?;
        z.check_layout(&self.dimensions())?;
        if check_constraints(&self.data, z, None).is_err() {
            return Ok(f64::NEG_INFINITY);
        }
        let cov = CovarianceCache::new(kappa, &self.spec)?;
        let idx: Vec<usize> = (0..self.data.len()).collect();
        Ok(ResidualStats::compute(&self.data, beta, z, idx.iter()).log_likelihood(&cov))
    }

    fn augmented_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>> {
        self.gradient_over(theta, z, None)
    }

    fn augmented_gradient_subset(&self, theta: &[f64], z: &LatentState, indices: &[usize]) -> Result<Vec<f64>> {
        check_index_set(indices, self.data.len())?;
        self.gradient_over(theta, z, Some(indices))
    }

    fn initial_latent(&self, _theta: &[f64]) -> Result<LatentState> {
        let j = self.spec.alternatives;
        let mut values = vec![-1.0; self.data.len() * j];
        for (block, &y) in values.chunks_exact_mut(j).zip(self.data.y()) {
            if y > 0 {
                block[y - 1] = 1.0;
            }
        }
        LatentState::new(values, j)
    }

    fn sample_latents<R: Rng + ?Sized>(&self, theta: &[f64], state: &mut LatentState, rng: &mut R) -> Result<()> {
        self.gibbs_sweep(theta, state, None, rng)
    }

    fn sample_latents_subset<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        state: &mut LatentState,
        indices: &[usize],
        rng: &mut R,
    ) -> Result<()> {
        self.gibbs_sweep(theta, state, Some(indices), rng)
    }

    fn latent_gradient(&self, theta: &[f64], z: &LatentState) -> Result<Vec<f64>> {
        let (beta, kappa) = self.split(theta)?;
        z.check_layout(&self.dimensions())?;
        let cov = CovarianceCache::new(kappa, &self.spec)?;
        let j = self.spec.alternatives;
        let mut out = vec![0.0; z.values().len()];
        let mut resid = vec![0.0; j];
        for (i, g) in out.chunks_exact_mut(j).enumerate() {
            linear_index(self.data.x_i(i), beta, &mut resid);
            resid.iter_mut().zip(z.block(i)).for_each(|(e, zi)| *e = zi - *e);
            for a in 0..j {
                g[a] = -(0..j).map(|b| cov.precision[a * j + b] * resid[b]).sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Clamps each z_i into the region consistent with y_i.
    fn constrain_latents(&self, z: &mut LatentState) {
        let j = self.spec.alternatives;
        let nudge = |b: f64| b + 1e-9 * (1.0 + b.abs());
        for (i, &y) in self.data.y().iter().enumerate() {
            let zi = z.block_mut(i);
            if y == 0 {
                zi.iter_mut().for_each(|v| *v = v.min(-1e-9));
                continue;
            }
            let c = y - 1;
            let top = (0..j).filter(|&b| b != c).fold(0.0f64, |m, b| m.max(zi[b]));
            if zi[c] <= top {
                zi[c] = nudge(top);
            }
        }
    }
}
