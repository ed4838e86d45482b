//! Information criteria for singular statistical models.
//!
//! The crate estimates WAIC, WBIC, the functional variance, the real log
//! canonical threshold (via the variance of `n L_n` at `1/log n`) and the
//! singular fluctuation from samples of the tempered posterior
//!
//! ```text
//! p_b(w | X^n) ∝ phi(w) prod_i p(X_i | w)^b
//! ```
//!
//! Models implement [`ModelSpec`]. [`sampler`] draws from the tempered
//! posterior, [`criteria`] turns draws into criteria with Monte Carlo
//! standard errors, and [`oracle`] provides exact reference values for the
//! conjugate Gaussian model and for models with one or two parameters.

pub mod criteria;
pub mod error;
pub mod model;
pub mod models;
pub mod oracle;
pub mod sampler;
pub mod seed;
pub mod stats;

pub use criteria::{functionals, ChainProvenance, CriteriaReport, PosteriorFunctionals};
pub use error::{Error, Result};
pub use model::{Bounds, Dataset, InverseTemperature, ModelSpec, Parameter, PriorShift, TruthMeta};
pub use models::{ConjugateNormalMeanModel, GaussianMixtureModel, ReducedRankRegressionModel};
pub use sampler::{run_chain, run_chains, Algorithm, Chain, SamplerConfig};
