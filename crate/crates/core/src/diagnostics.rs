//! Chain diagnostics and predictive scoring.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HulaError, Result};
use crate::mnp::predict::PredictiveSampler;
use crate::sampler::Draws;

/// Autocorrelation lags summed in the ESS denominator.
pub const DEFAULT_MAX_LAG: usize = 1000;
/// Probability floor applied before taking logs in the log-score.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub ess_per_parameter: Vec<f64>,
    pub ess_per_iteration: Vec<f64>,
    pub chain_length: usize,
    pub max_lag: usize,
}

/// ESS of a single series: K / (1 + 2 Σ_{l=1}^{L} ρ̂_l) with the biased
/// (1/K) autocovariance. The denominator is floored at 1/K and the result
/// capped at 2K; a constant series has ESS 1.
pub fn series_ess(series: &[f64], max_lag: usize) -> Result<f64> {
    let k = series.len();
    if k <= max_lag {
        return Err(HulaError::SeriesTooShort { len: k, max_lag });
    }
    let kf = k as f64;
    let mean = series.iter().sum::<f64>() / kf;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / kf;
    if !(c0 > 0.0) || c0 <= f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE).powi(2) {
        return Ok(1.0);
    }
    let mut rho_sum = 0.0;
    for lag in 1..=max_lag {
        let c: f64 = centered[..k - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / kf;
        rho_sum += c / c0;
    }
    let denom = (1.0 + 2.0 * rho_sum).max(1.0 / kf);
    Ok((kf / denom).min(2.0 * kf))
}

/// ESS for each column of `draws`.
pub fn effective_sample_size(draws: &Draws, max_lag: usize) -> Result<EssReport> {
    let k = draws.n_rows();
    let ess = draws
        .columns()
        .par_iter()
        .map(|c| series_ess(c, max_lag))
        .collect::<Result<Vec<_>>>()?;
    let per_iter = ess.iter().map(|e| e / k as f64).collect();
    Ok(EssReport {
        ess_per_parameter: ess,
        ess_per_iteration: per_iter,
        chain_length: k,
        max_lag,
    })
}

/// Per-parameter ratio of ESS per iteration, `numerator` over `denominator`.
pub fn ess_ratio(numerator: &EssReport, denominator: &EssReport) -> Result<Vec<f64>> {
    if numerator.ess_per_iteration.len() != denominator.ess_per_iteration.len() {
        return Err(HulaError::DimensionMismatch {
            expected: denominator.ess_per_iteration.len(),
            got: numerator.ess_per_iteration.len(),
        });
    }
    Ok(numerator
        .ess_per_iteration
        .iter()
        .zip(&denominator.ess_per_iteration)
        .map(|(a, b)| a / b)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveScore {
    pub log_score: f64,
    pub hit_rate: f64,
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &p)| if p > best.1 { (i, p) } else { best },
        )
        .0
}

/// Mean log predicted probability of the realized category and the share
/// of observations whose modal predicted category is the realized one.
pub fn predictive_scores(prob_table: &[Vec<f64>], y: &[usize]) -> Result<PredictiveScore> {
    if prob_table.len() != y.len() {
        return Err(HulaError::DimensionMismatch {
            expected: y.len(),
            got: prob_table.len(),
        });
    }
    if y.is_empty() {
        return Err(HulaError::InvalidInput("no observations to score".into()));
    }
    let mut log_score = 0.0;
    let mut hits = 0usize;
    for (i, (row, &yi)) in prob_table.iter().zip(y).enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(HulaError::InvalidInput(format!("probability row {i} sums to {total}")));
        }
        let p = *row
            .get(yi)
            .ok_or_else(|| HulaError::InvalidInput(format!("outcome {yi} outside probability row {i}")))?;
        log_score += p.max(PROBABILITY_FLOOR).ln();
        hits += usize::from(argmax(row) == yi);
    }
    let n = y.len() as f64;
    Ok(PredictiveScore {
        log_score: log_score / n,
        hit_rate: hits as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaivePredictor {
    pub category: usize,
    pub probabilities: Vec<f64>,
}

impl NaivePredictor {
    pub fn table(&self, n: usize) -> Vec<Vec<f64>> {
        vec![self.probabilities.clone(); n]
    }
}

/// Always predicts the most frequent training category; its probability row
/// is the empirical category distribution. Ties go to the lowest category.
pub fn naive_predictor(y_train: &[usize], n_categories: usize) -> Result<NaivePredictor> {
    if y_train.is_empty() {
        return Err(HulaError::InvalidInput("training outcomes are empty".into()));
    }
    let mut counts = vec![0usize; n_categories];
    for &y in y_train {
        *counts
            .get_mut(y)
            .ok_or_else(|| HulaError::InvalidInput(format!("category {y} outside 0..{n_categories}")))? += 1;
    }
    let n = y_train.len() as f64;
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(NaivePredictor {
        category: argmax(&probabilities),
        probabilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub price: f64,
    pub probabilities: Vec<f64>,
}

/// Predictive choice probabilities as the price regressor of one
/// alternative moves along `price_grid`, with every other regressor held at
/// `base_attributes` (a row-major J×r matrix, typically the sample mean).
///
/// `target_alternative` is 1-based; `price_column` indexes the regressor.
pub fn probability_curve<R: Rng + ?Sized>(
    predictive: &PredictiveSampler,
    base_attributes: &[f64],
    regressors: usize,
    price_grid: &[f64],
    target_alternative: usize,
    price_column: usize,
    rng: &mut R,
) -> Result<Vec<CurvePoint>> {
    let j = base_attributes.len() / regressors.max(1);
    if target_alternative == 0 || target_alternative > j {
        return Err(HulaError::InvalidInput(format!(
            "target alternative must lie in 1..={j}"
        )));
    }
    if price_column >= regressors {
        return Err(HulaError::InvalidInput(format!(
            "price column {price_column} outside 0..{regressors}"
        )));
    }
    let mut x = base_attributes.to_vec();
    price_grid
        .iter()
        .map(|&price| {
            x[(target_alternative - 1) * regressors + price_column] = price;
            Ok(CurvePoint {
                price,
                probabilities: predictive.probabilities(&x, rng)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn too_short_series() {
        assert!(matches!(
            series_ess(&[1.0; 10], 10),
            Err(HulaError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn constant_series_is_floored() {
        assert_eq!(series_ess(&[3.5; 2000], 1000).unwrap(), 1.0);
    }

    #[test]
    fn alternating_series_is_capped() {
        let s: Vec<f64> = (0..3000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let e = series_ess(&s, 1000).unwrap();
        assert!(e > 0.0 && e <= 6000.0);
    }

    #[test]
    fn ess_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = 0.0;
        let s: Vec<f64> = (0..20_000)
            .map(|_| {
                x = 0.5 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let t: Vec<f64> = s.iter().map(|v| -3.0 * v + 7.0).collect();
        let (a, b) = (series_ess(&s, 1000).unwrap(), series_ess(&t, 1000).unwrap());
        assert!((a - b).abs() / a < 1e-9);
    }

    #[test]
    fn score_examples() {
        let one_hot = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let s = predictive_scores(&one_hot, &[1, 0]).unwrap();
        assert_eq!(s.log_score, 0.0);
        assert_eq!(s.hit_rate, 1.0);

        let uniform = vec![vec![0.1; 10]; 4];
        let s = predictive_scores(&uniform, &[0, 3, 9, 5]).unwrap();
        assert!((s.log_score + 10f64.ln()).abs() < 1e-12);

        let floored = predictive_scores(&[vec![1.0, 0.0]], &[1]).unwrap();
        assert_eq!(floored.log_score, PROBABILITY_FLOOR.ln());
    }

    #[test]
    fn score_rejects_bad_rows() {
        assert!(predictive_scores(&[vec![0.5, 0.6]], &[0]).is_err());
        assert!(predictive_scores(&[vec![0.5, 0.5]], &[2]).is_err());
        assert!(predictive_scores(&[vec![0.5, 0.5]], &[0, 1]).is_err());
    }

    #[test]
    fn naive_examples() {
        let nv = naive_predictor(&[0, 0, 1], 2).unwrap();
        assert_eq!(nv.category, 0);
        assert!((nv.probabilities[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((nv.probabilities[1] - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(naive_predictor(&[2, 1, 0, 1, 2, 0], 3).unwrap().category, 0);
        assert!(naive_predictor(&[], 3).is_err());
        assert!(naive_predictor(&[3], 3).is_err());
    }

    #[test]
    fn ratio_dimension_check() {
        let a = EssReport {
            ess_per_parameter: vec![1.0],
            ess_per_iteration: vec![0.1],
            chain_length: 10,
            max_lag: 1,
        };
        let b = EssReport {
            ess_per_parameter: vec![1.0; 2],
            ess_per_iteration: vec![0.1; 2],
            ..a.clone()
        };
        assert!(ess_ratio(&a, &b).is_err());
        assert_eq!(ess_ratio(&a, &a).unwrap(), vec![1.0]);
    }
}
