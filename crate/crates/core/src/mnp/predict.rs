//! Simulation from the probit model and posterior predictive choice
//! probabilities.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::data::{linear_index, ChoiceDataset};
use super::model::{outcome_from_utilities, CovarianceCache, MnpParams};
use super::spherical::{equicorrelated, MnpSpec};
use crate::error::{HulaError, Result};
use crate::sampler::Draws;

/// z = μ + Lε with L the lower Cholesky factor of Σ.
fn draw_utilities<R: Rng + ?Sized>(mu: &[f64], chol: &DMatrix<f64>, eps: &mut [f64], out: &mut [f64], rng: &mut R) {
    let j = mu.len();
    for e in eps.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
    for a in 0..j {
        out[a] = mu[a] + (0..=a).map(|b| chol[(a, b)] * eps[b]).sum::<f64>();
    }
}

/// Draws z_i ~ N(X_iβ, Σ(κ)) and y_i = outcome(z_i) for every X_i in `x`
/// (row-major J×r blocks). Returns outcomes and the stacked utilities.
pub fn simulate_dataset<R: Rng + ?Sized>(
    params: &MnpParams,
    spec: &MnpSpec,
    x: &[f64],
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    spec.validate()?;
    if params.beta.len() != spec.regressors {
        return Err(HulaError::DimensionMismatch {
            expected: spec.regressors,
            got: params.beta.len(),
        });
    }
    let block = spec.alternatives * spec.regressors;
    if !x.len().is_multiple_of(block) {
        return Err(HulaError::InvalidInput(format!(
            "regressor length {} not a multiple of J·r = {block}",
            x.len()
        )));
    }
    let cov = CovarianceCache::new(&params.kappa, spec)?;
    let j = spec.alternatives;
    let n = x.len() / block;
    let mut z = vec![0.0; n * j];
    let mut y = Vec::with_capacity(n);
    let mut mu = vec![0.0; j];
    let mut eps = vec![0.0; j];
    for (xi, zi) in x.chunks_exact(block).zip(z.chunks_exact_mut(j)) {
        linear_index(xi, &params.beta, &mut mu);
        draw_utilities(&mu, &cov.chol, &mut eps, zi, rng);
        y.push(outcome_from_utilities(zi));
    }
    Ok((y, z))
}

/// Posterior predictive sampler over a set of parameter draws, with Σ(κ)
/// factorized once per draw.
#[derive(Debug, Clone)]
pub struct PredictiveSampler {
    spec: MnpSpec,
    draws: Vec<(Vec<f64>, DMatrix<f64>)>,
}

impl PredictiveSampler {
    pub fn new(theta_draws: &Draws, spec: &MnpSpec) -> Result<Self> {
        if theta_draws.dim() != spec.theta_dim() {
            return Err(HulaError::DimensionMismatch {
                expected: spec.theta_dim(),
                got: theta_draws.dim(),
            });
        }
        if theta_draws.n_rows() == 0 {
            return Err(HulaError::InvalidInput("need at least one parameter draw".into()));
        }
        let draws = theta_draws
            .rows()
            .map(|row| {
                let p = MnpParams::from_theta(row, spec)?;
                let cov = CovarianceCache::new(&p.kappa, spec)?;
                Ok((p.beta, cov.chol))
            })
            .collect::<Result<_>>()?;
        Ok(Self { spec: *spec, draws })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Empirical pmf over {0,…,J} of y_i⁽ᵏ⁾ with z_i⁽ᵏ⁾ ~ N(X_iβ⁽ᵏ⁾, Σ(κ⁽ᵏ⁾)),
    /// one utility draw per parameter draw.
    pub fn probabilities<R: Rng + ?Sized>(&self, x_i: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let j = self.spec.alternatives;
        if x_i.len() != j * self.spec.regressors {
            return Err(HulaError::DimensionMismatch {
                expected: j * self.spec.regressors,
                got: x_i.len(),
            });
        }
        let mut counts = vec![0usize; j + 1];
        let (mut mu, mut eps, mut z) = (vec![0.0; j], vec![0.0; j], vec![0.0; j]);
        for (beta, chol) in &self.draws {
            linear_index(x_i, beta, &mut mu);
            draw_utilities(&mu, chol, &mut eps, &mut z, rng);
            counts[outcome_from_utilities(&z)] += 1;
        }
        let k = self.draws.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / k).collect())
    }

    /// Probability rows for every observation of `data`.
    pub fn probability_table<R: Rng + ?Sized>(&self, data: &ChoiceDataset, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        (0..data.len()).map(|i| self.probabilities(data.x_i(i), rng)).collect()
    }
}

/// Posterior predictive choice probabilities for one regressor matrix.
pub fn choice_probabilities<R: Rng + ?Sized>(
    theta_draws: &Draws,
    spec: &MnpSpec,
    x_i: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    PredictiveSampler::new(theta_draws, spec)?.probabilities(x_i, rng)
}

/// Diagonal preconditioner: β entries are 0.99 over the diagonal of
/// (1/n) Σ_i X_iᵀ Σ_equi X_i with Σ_equi = ½(I + ιιᵀ), divided by J; κ
/// entries are 0.1.
///
/// The rule is calibrated for Σ with trace J, the trace of Σ_equi. Under the
/// unit-trace normalisation used here β shrinks by √J and its posterior
/// variance by J, so the β step is rescaled by 1/J to match.
pub fn default_preconditioner(data: &ChoiceDataset, spec: &MnpSpec) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(HulaError::InvalidInput("empty dataset".into()));
    }
    let (j, r) = (spec.alternatives, spec.regressors);
    if data.alternatives() != j || data.regressors() != r {
        return Err(HulaError::InvalidInput("dataset does not match the model shape".into()));
    }
    let equi = equicorrelated(j);
    let mut diag = vec![0.0; r];
    for i in 0..data.len() {
        let xi = data.x_i(i);
        for (c, d) in diag.iter_mut().enumerate() {
            for a in 0..j {
                for b in 0..j {
                    *d += xi[a * r + c] * equi[(a, b)] * xi[b * r + c];
                }
            }
        }
    }
    let n = data.len() as f64;
    let mut u = Vec::with_capacity(spec.theta_dim());
    for (c, d) in diag.into_iter().enumerate() {
        let d = d / n;
        if d.abs() < 1e-300 {
            return Err(HulaError::DegenerateDesign(format!(
                "regressor {c} has a zero diagonal"
            )));
        }
        u.push(0.99 / (d * j as f64));
    }
    u.extend(std::iter::repeat_n(0.1, spec.angle_dim()));
    Ok(u)
}
