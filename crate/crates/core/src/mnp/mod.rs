//! Multinomial probit model with a factor covariance in angle coordinates.

pub mod data;
pub mod model;
pub mod predict;
pub mod spherical;
pub mod truncnorm;

pub use data::{ChoiceDataset, InterceptLogPriceDesign};
pub use model::{
    check_constraints, outcome_from_utilities, sweep_utilities, CovarianceCache, MnpModel, MnpParams, MnpPrior,
    ResidualStats,
};
pub use predict::{choice_probabilities, default_preconditioner, simulate_dataset, PredictiveSampler};
pub use spherical::{sigma_from_angles, FactorCovariance, MnpSpec};
