#![allow(dead_code)]

use hula_core::diagnostics::series_ess;
use hula_core::mnp::model::outcome_from_utilities;
use hula_core::mnp::{ChoiceDataset, MnpSpec};
use hula_core::LatentState;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// Monte Carlo standard error of the mean of an autocorrelated series.
pub fn mcse(xs: &[f64]) -> f64 {
    let (_, var) = mean_var(xs);
    let ess = series_ess(xs, 1000.min(xs.len() - 1)).unwrap();
    (var / ess).sqrt()
}

/// Random regressors and utilities with outcomes read off the utilities, so
/// that z is consistent with y.
pub fn random_probit_instance(spec: &MnpSpec, n: usize, seed: u64) -> (ChoiceDataset, LatentState) {
    let mut r = rng(seed);
    let (j, k) = (spec.alternatives, spec.regressors);
    let x: Vec<f64> = (0..n * j * k).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let z: Vec<f64> = (0..n * j).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<usize> = z.chunks_exact(j).map(outcome_from_utilities).collect();
    (ChoiceDataset::new(j, k, y, x).unwrap(), LatentState::new(z, j).unwrap())
}

pub fn random_theta(spec: &MnpSpec, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta: Vec<f64> = (0..spec.regressors).map(|_| r.random_range(-1.0..1.0)).collect();
    theta.extend((0..spec.angle_dim()).map(|_| r.random_range(0.3..2.8)));
    theta
}

/// Central finite difference of `f` at `x` in coordinate `k`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut dn = x.to_vec();
    up[k] += h;
    dn[k] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

pub fn assert_gradient_matches_fd(f: impl Fn(&[f64]) -> f64, grad: &[f64], x: &[f64], rel_tol: f64) {
    for k in 0..x.len() {
        let fd = central_difference(&f, x, k, 1e-5);
        let err = (fd - grad[k]).abs() / grad[k].abs().max(1.0);
        assert!(
            err <= rel_tol,
            "coordinate {k}: analytic {} vs fd {fd} (rel err {err:e})",
            grad[k]
        );
    }
}

/// Intercept-plus-log-price data simulated from the probit model itself
/// (J = 3, one factor), with its parameter values.
pub fn simulated_probit(n: usize, seed: u64) -> (MnpSpec, ChoiceDataset, Vec<f64>) {
    use hula_core::mnp::spherical::angles_from_vector;
    use hula_core::mnp::{simulate_dataset, InterceptLogPriceDesign, MnpParams};
    let design = InterceptLogPriceDesign::new(3, 0.3);
    let spec = MnpSpec::new(3, 1, design.regressors()).unwrap();
    let mut r = rng(seed);
    let x = design.draw(n, &mut r);
    let params = MnpParams {
        beta: vec![0.3, -0.2, 0.1, -1.0],
        kappa: angles_from_vector(&[0.5, 0.3, 0.2, 0.5, 0.4, 0.45]),
    };
    let (y, _) = simulate_dataset(&params, &spec, &x, &mut r).unwrap();
    (
        spec,
        ChoiceDataset::new(3, spec.regressors, y, x).unwrap(),
        params.to_theta(),
    )
}
