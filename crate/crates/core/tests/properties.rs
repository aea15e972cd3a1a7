mod common;

use common::*;
use hula_core::diagnostics::{predictive_scores, probability_curve, series_ess};
use hula_core::gradient::draw_subset;
use hula_core::mnp::model::check_constraints;
use hula_core::mnp::spherical::{sigma_from_angles, unit_vector};
use hula_core::mnp::{choice_probabilities, MnpModel, MnpParams, MnpSpec, PredictiveSampler};
use hula_core::{hula_step, Draws, LatentModel, LatentState, LinearGaussianModel, ParameterVector, SamplerConfig};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = MnpSpec> {
    (1usize..6, 1usize..4, 1usize..4).prop_filter_map("p ≤ J", |(j, p, r)| MnpSpec::new(j, p, r).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn langevin_step_is_affine_in_its_inputs(
        t1 in prop::collection::vec(-5.0..5.0f64, 3),
        t2 in prop::collection::vec(-5.0..5.0f64, 3),
        g1 in prop::collection::vec(-5.0..5.0f64, 3),
        g2 in prop::collection::vec(-5.0..5.0f64, 3),
        e1 in prop::collection::vec(-3.0..3.0f64, 3),
        e2 in prop::collection::vec(-3.0..3.0f64, 3),
        tau in 1e-4..1.0f64,
        u in prop::collection::vec(0.01..10.0f64, 3),
    ) {
        let cfg = SamplerConfig { precond: u, tau, ..SamplerConfig::with_defaults(1, 3, 2, 0) };
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();
        let step = |t: &[f64], g: &[f64], e: &[f64]| {
            hula_step(&ParameterVector::new(t.to_vec()).unwrap(), g, &cfg, e).unwrap().into_inner()
        };
        let joint = step(&add(&t1, &t2), &add(&g1, &g2), &add(&e1, &e2));
        let split = add(&step(&t1, &g1, &e1), &step(&t2, &g2, &e2));
        for (a, b) in joint.iter().zip(&split) {
            prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn covariance_has_unit_trace_and_is_positive_definite(
        spec in spec_strategy(),
        seed in any::<u64>(),
    ) {
        let kappa: Vec<f64> = {
            use rand::Rng;
            let mut r = rng(seed);
            (0..spec.angle_dim()).map(|_| r.random_range(-10.0..10.0)).collect()
        };
        let v = unit_vector(&kappa);
        prop_assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let cov = sigma_from_angles(&kappa, &spec).unwrap();
        prop_assert!((cov.sigma.trace() - 1.0).abs() < 1e-12);
        prop_assert!(cov.sigma.clone().cholesky().is_some() || cov.d_diag.iter().any(|d| d.abs() < 1e-7));
    }

    #[test]
    fn gibbs_sweep_preserves_outcomes(seed in any::<u64>(), n in 1usize..40) {
        let spec = MnpSpec::new(3, 1, 2).unwrap();
        let (data, _) = random_probit_instance(&spec, n, seed);
        let model = MnpModel::new(spec, data.clone()).unwrap();
        let theta = random_theta(&spec, &mut rng(seed ^ 1));
        let mut z = model.initial_latent(&theta).unwrap();
        let mut r = rng(seed ^ 2);
        for _ in 0..5 {
            model.sample_latents(&theta, &mut z, &mut r).unwrap();
            prop_assert!(check_constraints(&data, &z, None).is_ok());
        }
    }

    #[test]
    fn subset_gradients_add_over_partitions(
        y in prop::collection::vec(-5.0..5.0f64, 2..30),
        theta in -3.0..3.0f64,
        mask in any::<u32>(),
    ) {
        let model = LinearGaussianModel::new(y.clone(), 1.3, 0.8, 0.0, 1.0).unwrap();
        let z = LatentState::new(y.iter().map(|v| v * 0.7).collect(), 1).unwrap();
        let (a, b): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|i| mask >> (i % 32) & 1 == 1);
        prop_assume!(!a.is_empty() && !b.is_empty());
        let full = model.augmented_gradient(&[theta], &z).unwrap()[0];
        let ga = model.augmented_gradient_subset(&[theta], &z, &a).unwrap()[0];
        let gb = model.augmented_gradient_subset(&[theta], &z, &b).unwrap()[0];
        prop_assert!((ga + gb - full).abs() < 1e-9 * full.abs().max(1.0));
    }

    #[test]
    fn subsets_are_sorted_distinct_and_in_range(n in 1usize..500, frac in 0.0..1.0f64, seed in any::<u64>()) {
        let m = ((n as f64 * frac) as usize).max(1);
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        draw_subset(&mut pool, m, &mut rng(seed), &mut out);
        prop_assert_eq!(out.len(), m);
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.iter().all(|&i| i < n));
    }

    #[test]
    fn ess_is_affine_invariant(seed in any::<u64>(), a in -100.0..100.0f64, b in 0.01..100.0f64) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut x = 0.0;
        let series: Vec<f64> = (0..1500).map(|_| { x = 0.5 * x + r.random::<f64>(); x }).collect();
        let moved: Vec<f64> = series.iter().map(|v| a + b * v).collect();
        let (e1, e2) = (series_ess(&series, 100).unwrap(), series_ess(&moved, 100).unwrap());
        prop_assert!((e1 - e2).abs() < 1e-6 * e1);
    }

    #[test]
    fn scores_ignore_observation_order(seed in any::<u64>(), n in 1usize..50) {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..4).map(|_| r.random::<f64>() + 1e-3).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let rows_p: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let y_p: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let (s1, s2) = (predictive_scores(&rows, &y).unwrap(), predictive_scores(&rows_p, &y_p).unwrap());
        prop_assert!((s1.log_score - s2.log_score).abs() < 1e-12);
        prop_assert_eq!(s1.hit_rate, s2.hit_rate);
    }
}

#[test]
fn singleton_curve_equals_direct_probabilities() {
    let spec = MnpSpec::new(3, 1, 2).unwrap();
    let start = MnpParams::default_start(&spec);
    let rows = (0..200).map(|k| {
        let mut t = vec![0.1 * (k % 7) as f64, -0.5];
        t.extend(&start.kappa);
        t
    });
    let draws = Draws::from_rows(spec.theta_dim(), rows).unwrap();
    let base = vec![1.0, 0.2, 0.0, -0.1, 0.5, 0.3];
    let predictive = PredictiveSampler::new(&draws, &spec).unwrap();
    let curve = probability_curve(&predictive, &base, 2, &[0.7], 2, 1, &mut rng(1)).unwrap();
    let mut x = base.clone();
    x[2 + 1] = 0.7;
    let direct = choice_probabilities(&draws, &spec, &x, &mut rng(1)).unwrap();
    assert_eq!(curve[0].probabilities, direct);
    assert!(probability_curve(&predictive, &base, 2, &[], 2, 1, &mut rng(1))
        .unwrap()
        .is_empty());
}
