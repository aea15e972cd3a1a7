//! Unbiased estimates of ∇_θ log p(y | θ) through the Fisher identity,
//! with optional subsampling of observations.

use std::time::Instant;

use rand::Rng;

use crate::error::{HulaError, Result};
use crate::model::{LatentModel, LatentState};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Likelihood-only gradient estimate; the prior is added by [`posterior_gradient`].
    pub value: Vec<f64>,
    pub s_used: usize,
    /// Index set of the last inner draw when subsampling is active (sorted).
    pub subsample_indices: Option<Vec<usize>>,
    /// Wall time spent inside latent sampling.
    pub latent_seconds: f64,
}

/// Averages ∇_θ log p(y, z⁽ˢ⁾ | θ) over `s_draws` sequential latent updates
/// starting from the carried `latent` state.
pub fn fisher_gradient<M, R>(
    model: &M,
    theta: &[f64],
    s_draws: usize,
    latent: &mut LatentState,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    M: LatentModel,
    R: Rng + ?Sized,
{
    if s_draws == 0 {
        return Err(HulaError::InvalidInput("S must be at least 1".into()));
    }
    let mut acc = vec![0.0; model.dimensions().theta_dim];
    let mut latent_seconds = 0.0;
    for _ in 0..s_draws {
        let start = Instant::now();
        model.sample_latents(theta, latent, rng)?;
        latent_seconds += start.elapsed().as_secs_f64();
        let g = model.augmented_gradient(theta, latent)?;
        acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi);
    }
    let inv = 1.0 / s_draws as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(GradientEstimate {
        value: acc,
        s_used: s_draws,
        subsample_indices: None,
        latent_seconds,
    })
}

/// Subsampled Fisher estimator: for each of the `s_draws` inner steps a fresh
/// uniform size-`m` subset A is drawn without replacement, only the latent
/// blocks in A are refreshed, and (n/m)·∇_θ log p(y_A, z_A | θ) is averaged.
pub fn subsampled_fisher_gradient<M, R>(
    model: &M,
    theta: &[f64],
    s_draws: usize,
    m: usize,
    latent: &mut LatentState,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    M: LatentModel,
    R: Rng + ?Sized,
{
    if s_draws == 0 {
        return Err(HulaError::InvalidInput("S must be at least 1".into()));
    }
    let n = model.dimensions().n_obs;
    if m == 0 || m > n {
        return Err(HulaError::InvalidInput(format!("subsample size {m} outside [1, {n}]")));
    }
    let scale = n as f64 / m as f64;
    let mut acc = vec![0.0; model.dimensions().theta_dim];
    let mut latent_seconds = 0.0;
    let mut pool: Vec<usize> = (0..n).collect();
    let mut subset = Vec::with_capacity(m);
    for _ in 0..s_draws {
        draw_subset(&mut pool, m, rng, &mut subset);
        let start = Instant::now();
        model.sample_latents_subset(theta, latent, &subset, rng)?;
        latent_seconds += start.elapsed().as_secs_f64();
        let g = model.augmented_gradient_subset(theta, latent, &subset)?;
        acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += scale * gi);
    }
    let inv = 1.0 / s_draws as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(GradientEstimate {
        value: acc,
        s_used: s_draws,
        subsample_indices: Some(subset),
        latent_seconds,
    })
}

/// Adds the closed-form prior gradient to a likelihood gradient estimate.
pub fn posterior_gradient<M: LatentModel>(model: &M, theta: &[f64], estimate: &GradientEstimate) -> Result<Vec<f64>> {
    if estimate.value.len() != theta.len() {
        return Err(HulaError::DimensionMismatch {
            expected: theta.len(),
            got: estimate.value.len(),
        });
    }
    let prior = model.log_prior_gradient(theta)?;
    Ok(estimate.value.iter().zip(&prior).map(|(g, p)| g + p).collect())
}

/// Uniform size-`m` subset of `0..pool.len()` by a partial Fisher–Yates
/// shuffle of `pool`, returned sorted in `out`.
pub fn draw_subset<R: Rng + ?Sized>(pool: &mut [usize], m: usize, rng: &mut R, out: &mut Vec<usize>) {
    let n = pool.len();
    debug_assert!(m <= n);
    for i in 0..m {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    out.clear();
    out.extend_from_slice(&pool[..m]);
    out.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::LinearGaussianModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle(n: usize, seed: u64) -> LinearGaussianModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = LinearGaussianModel::simulate(n, 0.7, 1.0, 1.0, &mut rng);
        LinearGaussianModel::new(y, 1.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn zero_draws_rejected() {
        let m = oracle(5, 1);
        let mut z = m.initial_latent(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(fisher_gradient(&m, &[0.0], 0, &mut z, &mut rng).is_err());
        assert!(subsampled_fisher_gradient(&m, &[0.0], 0, 2, &mut z, &mut rng).is_err());
    }

    #[test]
    fn subsample_size_out_of_range() {
        let m = oracle(5, 1);
        let mut z = m.initial_latent(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(subsampled_fisher_gradient(&m, &[0.0], 1, 0, &mut z, &mut rng).is_err());
        assert!(subsampled_fisher_gradient(&m, &[0.0], 1, 6, &mut z, &mut rng).is_err());
    }

    #[test]
    fn fisher_estimate_is_unbiased() {
        let m = oracle(20, 4);
        let theta = 0.3;
        let truth = m.marginal_likelihood_gradient(theta);
        let mut z = m.initial_latent(&[theta]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = fisher_gradient(&m, &[theta], 100_000, &mut z, &mut rng).unwrap();
        // Var of one term: n σ_z⁻⁴ Var(z_i | y_i) = 20 * 0.5 = 10.
        let se = (10.0f64 / 100_000.0).sqrt();
        assert!((est.value[0] - truth).abs() < 4.0 * se, "{} vs {truth}", est.value[0]);
        assert_eq!(est.s_used, 100_000);
        assert!(est.subsample_indices.is_none());
    }

    #[test]
    fn averaging_reduces_variance_by_s() {
        let m = oracle(10, 2);
        let theta = [0.1];
        let mut z = m.initial_latent(&theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reps = 10_000;
        let one: Vec<f64> = (0..reps)
            .map(|_| fisher_gradient(&m, &theta, 1, &mut z, &mut rng).unwrap().value[0])
            .collect();
        let hundred: Vec<f64> = (0..reps)
            .map(|_| fisher_gradient(&m, &theta, 100, &mut z, &mut rng).unwrap().value[0])
            .collect();
        let ratio = mean_var(&one).1 / mean_var(&hundred).1;
        assert!((100.0 / 1.3..100.0 * 1.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn point_mass_conditional_gives_plug_in_gradient() {
        let y = vec![0.4, -1.2, 2.5];
        let m = LinearGaussianModel::new(y.clone(), 1.0, 1e-10, 0.0, 1.0).unwrap();
        let theta = 0.25;
        let plug_in: f64 = y.iter().map(|yi| yi - theta).sum();
        let mut z = m.initial_latent(&[theta]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [1, 7] {
            let est = fisher_gradient(&m, &[theta], s, &mut z, &mut rng).unwrap();
            assert!((est.value[0] - plug_in).abs() < 1e-8);
        }
    }

    #[test]
    fn full_subsample_matches_full_estimator() {
        let m = oracle(30, 9);
        let theta = [0.5];
        let z0 = m.initial_latent(&theta).unwrap();

        let mut z = z0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sub = subsampled_fisher_gradient(&m, &theta, 1, 30, &mut z, &mut rng).unwrap();
        assert_eq!(sub.subsample_indices.as_deref(), Some(&(0..30).collect::<Vec<_>>()[..]));
        let full = m.augmented_gradient(&theta, &z).unwrap();
        assert_eq!(sub.value, full);
    }

    #[test]
    fn two_point_subsample_expectation() {
        let m = LinearGaussianModel::new(vec![1.0, -3.0], 1.0, 1.0, 0.0, 1.0).unwrap();
        let theta = 0.2;
        // Each single-observation estimate is 2·(E[z_i|y_i] − θ); the average of
        // the two equals the full marginal gradient.
        let expected = 0.5
            * (0..2)
                .map(|i| 2.0 * (m.latent_conditional(theta, m.y()[i]).0 - theta))
                .sum::<f64>();
        let mut z = m.initial_latent(&[theta]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 200_000;
        let mut draws = Vec::with_capacity(reps);
        for _ in 0..reps {
            let est = subsampled_fisher_gradient(&m, &[theta], 1, 1, &mut z, &mut rng).unwrap();
            assert_eq!(est.subsample_indices.as_ref().unwrap().len(), 1);
            draws.push(est.value[0]);
        }
        let (mean, var) = mean_var(&draws);
        assert!((mean - expected).abs() < 4.0 * (var / reps as f64).sqrt());
    }

    #[test]
    fn subset_draw_is_uniform_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 6;
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        let mut counts = vec![0usize; n];
        let reps = 60_000;
        for _ in 0..reps {
            draw_subset(&mut pool, 2, &mut rng, &mut out);
            assert_eq!(out.len(), 2);
            assert!(out[0] < out[1]);
            for &i in &out {
                counts[i] += 1;
            }
        }
        // Each index is included with probability m/n = 1/3.
        for c in counts {
            let p = c as f64 / reps as f64;
            assert!((p - 1.0 / 3.0).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn posterior_gradient_adds_prior() {
        let m = oracle(3, 1);
        let est = GradientEstimate {
            value: vec![0.0],
            s_used: 1,
            subsample_indices: None,
            latent_seconds: 0.0,
        };
        assert_eq!(posterior_gradient(&m, &[0.0], &est).unwrap(), vec![0.0]);
        let est = GradientEstimate {
            value: vec![1.5],
            ..est
        };
        assert_eq!(posterior_gradient(&m, &[2.0], &est).unwrap(), vec![1.5 - 2.0]);

        let flat = LinearGaussianModel::new(vec![1.0], 1.0, 1.0, 0.0, f64::INFINITY).unwrap();
        assert_eq!(posterior_gradient(&flat, &[3.0], &est).unwrap(), vec![1.5]);

        let bad = GradientEstimate {
            value: vec![1.0, 2.0],
            ..est
        };
        assert!(posterior_gradient(&m, &[0.0], &bad).is_err());
    }
}
