mod common;

use common::*;
use hula_core::mcmc::{
    gibbs_beta, mh_block_step, run_exact_mcmc, run_oracle_gibbs, BetaConditional, McmcConfig, MhConfig,
};
use hula_core::mnp::model::check_constraints;
use hula_core::mnp::{ChoiceDataset, CovarianceCache, MnpModel, MnpParams, MnpSpec};
use hula_core::{LatentModel, LinearGaussianModel, ParameterVector};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;

fn beta_setup() -> (ChoiceDataset, hula_core::LatentState, CovarianceCache) {
    let spec = MnpSpec::new(3, 1, 4).unwrap();
    let (data, z) = random_probit_instance(&spec, 60, 1);
    let kappa = random_theta(&spec, &mut rng(2))[4..].to_vec();
    (data, z, CovarianceCache::new(&kappa, &spec).unwrap())
}

#[test]
fn beta_conditional_mean_solves_stacked_normal_equations() {
    let (data, z, cov) = beta_setup();
    let (n, j, r) = (data.len(), 3, 4);
    let x = DMatrix::from_row_slice(n * j, r, data.x());
    let sigma_inv = cov.sigma().clone().try_inverse().unwrap();
    let mut p = DMatrix::zeros(n * j, n * j);
    for i in 0..n {
        p.view_mut((i * j, i * j), (j, j)).copy_from(&sigma_inv);
    }
    let lhs = x.transpose() * &p * &x + DMatrix::identity(r, r) * 10.0;
    let rhs = x.transpose() * &p * DVector::from_column_slice(z.values());
    let expected = lhs.lu().solve(&rhs).unwrap();

    let cond = BetaConditional::new(&z, &data, &cov, 10.0).unwrap();
    let noiseless = cond.draw_with_noise(&[0.0; 4]);
    for c in 0..r {
        assert!(
            (noiseless[c] - expected[c]).abs() < 1e-10,
            "{noiseless:?} vs {expected}"
        );
    }
}

#[test]
fn dominant_prior_pins_beta_at_zero() {
    let (data, z, cov) = beta_setup();
    let beta = gibbs_beta(&z, &data, &cov, 1e12, &mut rng(3)).unwrap();
    assert!(beta.iter().all(|b| b.abs() < 1e-4), "{beta:?}");
}

#[test]
fn beta_draws_have_conditional_moments() {
    let (data, z, cov) = beta_setup();
    let cond = BetaConditional::new(&z, &data, &cov, 10.0).unwrap();
    let var = cond.covariance();
    let mut r = rng(4);
    let m = 100_000;
    let draws: Vec<Vec<f64>> = (0..m)
        .map(|_| gibbs_beta(&z, &data, &cov, 10.0, &mut r).unwrap())
        .collect();
    for c in 0..4 {
        let col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
        let (mean, v) = mean_var(&col);
        let se = (var[(c, c)] / m as f64).sqrt();
        assert!((mean - cond.mean[c]).abs() < 4.0 * se);
        assert!((v / var[(c, c)] - 1.0).abs() < 0.02);
    }
}

#[test]
fn mh_step_limits() {
    let mut r = rng(5);
    let smooth = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
    let mut x = vec![0.3, -0.2];
    let mut current = smooth(&x);
    let accepted = (0..1000)
        .filter(|_| mh_block_step(&mut x, &[0, 1], 1e-9, &mut current, smooth, &mut r))
        .count();
    assert_eq!(accepted, 1000);
    assert!((x[0] - 0.3).abs() < 1e-6);
    assert_eq!(current, smooth(&x));

    let start = vec![0.3, -0.2];
    let pinned = |v: &[f64]| if v == start.as_slice() { 0.0 } else { f64::NEG_INFINITY };
    let mut x = start.clone();
    let mut current = 0.0;
    assert!(!(0..100).any(|_| mh_block_step(&mut x, &[1], 0.5, &mut current, pinned, &mut r)));
    assert_eq!(x, start);

    let mut x = vec![0.0, 0.0];
    let mut current = smooth(&x);
    mh_block_step(&mut x, &[1], 10.0, &mut current, smooth, &mut r);
    assert_eq!(x[0], 0.0);
}

#[test]
fn blocked_mh_leaves_torus_target_invariant() {
    let log_target = |x: &[f64]| 2.0 * (x[0] - 1.0).cos() + (x[1] + 0.5).cos() + 0.5 * (x[0] - x[1]).cos();
    let bins = 10;
    let width = TAU / bins as f64;
    let wrap = |v: f64| v.rem_euclid(TAU);

    // Normalised bin masses by midpoint quadrature on a 40×40 sub-grid per bin.
    let sub = 40;
    let mut mass = vec![0.0; bins * bins];
    for a in 0..bins * sub {
        for b in 0..bins * sub {
            let h = width / sub as f64;
            let x = [(a as f64 + 0.5) * h, (b as f64 + 0.5) * h];
            mass[(a / sub) * bins + b / sub] += log_target(&x).exp();
        }
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);

    let mut r = rng(6);
    let mut x = vec![0.0, 0.0];
    let mut current = log_target(&x);
    let blocks: [&[usize]; 2] = [&[0], &[0, 1]];
    let iterations = 10_000_000;
    let mut hist = vec![0.0; bins * bins];
    for k in 0..iterations {
        mh_block_step(&mut x, blocks[k % 2], 1.2, &mut current, log_target, &mut r);
        let (a, b) = ((wrap(x[0]) / width) as usize, (wrap(x[1]) / width) as usize);
        hist[a.min(bins - 1) * bins + b.min(bins - 1)] += 1.0 / iterations as f64;
    }
    let peak = mass.iter().cloned().fold(0.0, f64::max);
    let worst = hist.iter().zip(&mass).map(|(h, m)| (h - m).abs()).fold(0.0, f64::max);
    assert!(worst < 0.02 * peak, "sup-norm error {worst} vs peak mass {peak}");
}

#[test]
fn mh_config_validation() {
    assert_eq!(
        MhConfig::contiguous(7, 0.1, 10).blocks,
        vec![vec![0, 1, 2], vec![3, 4, 5], vec![6]]
    );
    assert!(MhConfig::contiguous(5, 0.1, 0).validate(5).is_ok());
    assert!(MhConfig::contiguous(5, 0.0, 0).validate(5).is_err());
    assert!(MhConfig::contiguous(5, 0.1, 0).validate(6).is_err());
    let overlapping = MhConfig {
        blocks: vec![vec![0, 1], vec![1]],
        proposal_sd: vec![0.1, 0.1],
        adapt_until: 0,
    };
    assert!(overlapping.validate(2).is_err());
}

#[test]
fn exact_mcmc_single_observation() {
    let spec = MnpSpec::new(3, 1, 2).unwrap();
    let data = ChoiceDataset::new(3, 2, vec![2], vec![1.0, 0.2, 0.0, -0.3, 1.0, 0.4]).unwrap();
    let model = MnpModel::new(spec, data.clone()).unwrap();
    let start = ParameterVector::new(MnpParams::default_start(&spec).to_theta()).unwrap();
    let cfg = McmcConfig::for_spec(&spec, 3000, 1000);
    let out = run_exact_mcmc(&model, &cfg, &start, &mut rng(7)).unwrap();
    assert_eq!(out.chain.draws.n_rows(), 2000);
    assert!(out.acceptance_rates.iter().all(|a| *a > 0.0 && *a < 1.0));
    check_constraints(&data, &out.chain.final_latent, None).unwrap();
    assert!(out.chain.config.is_none());
}

#[test]
fn exact_mcmc_agrees_across_seeds() {
    let spec = MnpSpec::new(2, 1, 2).unwrap();
    let mut r = rng(8);
    let x = hula_core::mnp::data::gaussian_design(150, 2, 2, &mut r);
    let params = MnpParams {
        beta: vec![0.8, -0.5],
        kappa: hula_core::mnp::spherical::angles_from_vector(&[0.5, 0.3, 0.55, 0.6]),
    };
    let (y, _) = hula_core::mnp::simulate_dataset(&params, &spec, &x, &mut r).unwrap();
    let model = MnpModel::new(spec, ChoiceDataset::new(2, 2, y, x).unwrap()).unwrap();
    let start = ParameterVector::new(MnpParams::default_start(&spec).to_theta()).unwrap();
    let cfg = McmcConfig::for_spec(&spec, 60_000, 5000);
    let a = run_exact_mcmc(&model, &cfg, &start, &mut rng(9)).unwrap().chain.draws;
    let b = run_exact_mcmc(&model, &cfg, &start, &mut rng(10)).unwrap().chain.draws;
    for c in 0..2 {
        let (ca, cb) = (a.column(c), b.column(c));
        let se = (mcse(&ca).powi(2) + mcse(&cb).powi(2)).sqrt();
        let diff = (mean_var(&ca).0 - mean_var(&cb).0).abs();
        assert!(diff < 4.0 * se, "β_{c}: difference {diff} vs se {se}");
    }
}

#[test]
fn oracle_gibbs_matches_conjugate_posterior() {
    let y = LinearGaussianModel::simulate(200, 0.8, 1.0, 0.5, &mut rng(11));
    let model = LinearGaussianModel::new(y, 1.0, 0.5, 0.0, 4.0).unwrap();
    let (mean, var) = model.exact_posterior();
    let out = run_oracle_gibbs(&model, 200_000, 1000, 0.0, &mut rng(12)).unwrap();
    let col = out.draws.column(0);
    let (m, v) = mean_var(&col);
    assert!((m - mean).abs() < 3.0 * mcse(&col), "{m} vs {mean}");
    assert!((v / var - 1.0).abs() < 0.05, "{v} vs {var}");
    assert_eq!(out.final_latent.n_blocks(), model.dimensions().n_obs);
}
