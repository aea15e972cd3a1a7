//! Observed choices and regressors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};

/// Outcomes y_i ∈ {0,…,J} with per-observation J×r regressor matrices X_i,
/// stored row-major and stacked over observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    alternatives: usize,
    regressors: usize,
    y: Vec<usize>,
    x: Vec<f64>,
}

impl ChoiceDataset {
    pub fn new(alternatives: usize, regressors: usize, y: Vec<usize>, x: Vec<f64>) -> Result<Self> {
        if alternatives == 0 || regressors == 0 {
            return Err(HulaError::InvalidInput("J and r must be positive".into()));
        }
        let block = alternatives * regressors;
        if x.len() != y.len() * block {
            return Err(HulaError::DimensionMismatch {
                expected: y.len() * block,
                got: x.len(),
            });
        }
        if let Some(i) = y.iter().position(|&c| c > alternatives) {
            return Err(HulaError::InvalidInput(format!(
                "outcome {} of observation {i} exceeds J = {alternatives}",
                y[i]
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HulaError::InvalidInput("regressors must be finite".into()));
        }
        Ok(Self {
            alternatives,
            regressors,
            y,
            x,
        })
    }

    pub fn alternatives(&self) -> usize {
        self.alternatives
    }

    pub fn regressors(&self) -> usize {
        self.regressors
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// X_i as a row-major J×r slice.
    pub fn x_i(&self, i: usize) -> &[f64] {
        let block = self.alternatives * self.regressors;
        &self.x[i * block..(i + 1) * block]
    }

    /// Observations at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.alternatives * self.regressors);
        let y = indices
            .iter()
            .map(|&i| {
                x.extend_from_slice(self.x_i(i));
                self.y[i]
            })
            .collect();
        Self {
            alternatives: self.alternatives,
            regressors: self.regressors,
            y,
            x,
        }
    }

    /// Element-wise mean of the regressor matrices.
    pub fn mean_attributes(&self) -> Vec<f64> {
        let block = self.alternatives * self.regressors;
        let mut mean = vec![0.0; block];
        for xi in self.x.chunks_exact(block) {
            mean.iter_mut().zip(xi).for_each(|(m, v)| *m += v);
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn with_outcomes(&self, y: Vec<usize>) -> Result<Self> {
        Self::new(self.alternatives, self.regressors, y, self.x.clone())
    }
}

/// Computes μ_i = X_i β.
pub fn linear_index(x_i: &[f64], beta: &[f64], out: &mut [f64]) {
    let r = beta.len();
    for (o, row) in out.iter_mut().zip(x_i.chunks_exact(r)) {
        *o = row.iter().zip(beta).map(|(a, b)| a * b).sum();
    }
}

/// Alternative-specific intercepts plus one log-price regressor.
///
/// Row j of X_i is (e_j, log price_ij − log price_i0), so r = J + 1 and the
/// price coefficient is the last entry of β. Log prices of alternative j are
/// N(`log_price_means[j]`, `log_price_sd`²), with index 0 the base category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptLogPriceDesign {
    pub alternatives: usize,
    pub log_price_means: Vec<f64>,
    pub log_price_sd: f64,
}

impl InterceptLogPriceDesign {
    pub fn new(alternatives: usize, log_price_sd: f64) -> Self {
        Self {
            alternatives,
            log_price_means: vec![0.0; alternatives + 1],
            log_price_sd,
        }
    }

    pub fn regressors(&self) -> usize {
        self.alternatives + 1
    }

    /// Column of X_i holding the relative log price.
    pub fn price_column(&self) -> usize {
        self.alternatives
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let j = self.alternatives;
        let r = self.regressors();
        let mut x = vec![0.0; n * j * r];
        let mut log_price = vec![0.0; j + 1];
        for xi in x.chunks_exact_mut(j * r) {
            for (lp, m) in log_price.iter_mut().zip(&self.log_price_means) {
                *lp = m + self.log_price_sd * rng.sample::<f64, _>(StandardNormal);
            }
            for (a, row) in xi.chunks_exact_mut(r).enumerate() {
                row[a] = 1.0;
                row[j] = log_price[a + 1] - log_price[0];
            }
        }
        x
    }
}

/// Regressors with iid standard normal entries.
pub fn gaussian_design<R: Rng + ?Sized>(n: usize, alternatives: usize, regressors: usize, rng: &mut R) -> Vec<f64> {
    (0..n * alternatives * regressors)
        .map(|_| rng.sample(StandardNormal))
        .collect()
}
