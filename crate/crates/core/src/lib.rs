//! Hybrid unadjusted Langevin sampling for Bayesian latent-variable models.
//!
//! The sampler runs Langevin dynamics on the marginal posterior p(θ | y),
//! estimating its gradient through the Fisher identity with draws of the
//! latent variables from their exact conditional (or an exact MCMC update of
//! it), optionally on a random subsample of observations.
//!
//! Crate layout:
//! - [`model`]: the [`LatentModel`] contract and state types.
//! - [`oracle`]: a linear-Gaussian model with a closed-form posterior.
//! - [`gradient`]: Fisher-identity gradient estimators.
//! - [`sampler`]: the HULA loop and joint ULA over (θ, z).
//! - [`mnp`]: the multinomial probit model.
//! - [`mcmc`]: exact MCMC baselines.
//! - [`diagnostics`]: ESS, predictive scores and probability curves.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod gradient;
pub mod mcmc;
pub mod mnp;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampler;

pub use error::{HulaError, Result};
pub use gradient::{fisher_gradient, posterior_gradient, subsampled_fisher_gradient, GradientEstimate};
pub use mnp::{ChoiceDataset, MnpModel, MnpParams, MnpSpec};
pub use model::{LatentModel, LatentState, ModelDimensions, ParameterVector};
pub use oracle::LinearGaussianModel;
pub use sampler::{hula_step, run_hula, run_joint_ula, ChainOutput, Draws, JointUlaOptions, SamplerConfig, Subsample};
