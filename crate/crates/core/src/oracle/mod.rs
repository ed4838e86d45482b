//! Exact reference values: closed forms for the conjugate Gaussian model and
//! tensor-grid quadrature for low-dimensional models.

mod conjugate;
mod quadrature;

pub use conjugate::{
    conjugate_bayes_gen_loss, conjugate_exact, conjugate_gibbs_gen_loss, conjugate_posterior,
    conjugate_predictive_log_density, conjugate_report, truncation_mass, ConjugateOracleResult, WbicComponents,
};
pub use quadrature::{quadrature_bayes_gen_loss, quadrature_expectation, QuadratureOracle};
