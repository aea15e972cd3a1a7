//! Fixtures shared by the benchmarks.

use hula_core::mnp::spherical::angles_from_vector;
use hula_core::mnp::{simulate_dataset, ChoiceDataset, InterceptLogPriceDesign, MnpModel, MnpParams, MnpSpec};
use hula_core::rng::chain_rng;

/// Three alternatives, one factor, intercepts plus relative log price.
pub fn probit_instance(n: usize, seed: u64) -> (MnpModel, Vec<f64>) {
    let design = InterceptLogPriceDesign::new(3, 0.3);
    let spec = MnpSpec::new(3, 1, design.regressors()).expect("valid spec");
    let mut rng = chain_rng(seed);
    let x = design.draw(n, &mut rng);
    let truth = MnpParams {
        beta: vec![0.3, -0.2, 0.1, -1.0],
        kappa: angles_from_vector(&[0.5, 0.3, 0.2, 0.5, 0.4, 0.45]),
    };
    let (y, _) = simulate_dataset(&truth, &spec, &x, &mut rng).expect("simulation succeeds");
    let data = ChoiceDataset::new(3, spec.regressors, y, x).expect("consistent dataset");
    (MnpModel::new(spec, data).expect("non-empty data"), truth.to_theta())
}
