//! Concrete models: a regular conjugate Gaussian with closed-form posteriors,
//! and two singular families (a two-component Gaussian mixture and reduced
//! rank regression).

mod conjugate;
mod mixture;
mod rrr;

pub use conjugate::ConjugateNormalMeanModel;
pub use mixture::GaussianMixtureModel;
pub use rrr::ReducedRankRegressionModel;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x | mean, 1)` for scalar `x`.
#[inline]
pub(crate) fn std_normal_log_density(x: f64, mean: f64) -> f64 {
    let r = x - mean;
    -0.5 * LN_2PI - 0.5 * r * r
}
