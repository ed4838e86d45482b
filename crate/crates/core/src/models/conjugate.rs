use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::LN_2PI;
use crate::error::{Error, Result};
use crate::model::{Bounds, Dataset, ModelSpec, Parameter, TruthMeta};

/// `x ~ N(w, sigma^2 I_d)` with prior `w ~ N(m, tau^2 I_d)` truncated to
/// `[-B, B]^d`. The truth is `N(mu0, sigma^2 I_d)`, so the model is regular
/// and realizable with `w0 = mu0`.
///
/// Satisfies the fundamental conditions by construction: the box is compact,
/// the truncated Gaussian prior is smooth and positive on it, and the
/// log-likelihood ratio is a quadratic in `x` with all moments finite.
#[derive(Debug, Clone)]
pub struct ConjugateNormalMeanModel {
    d: usize,
    sigma: f64,
    tau: f64,
    prior_mean: Vec<f64>,
    mu0: Vec<f64>,
    bounds: Bounds,
    truth: TruthMeta,
    /// `-(d/2) log(2 pi sigma^2)`, cached for the hot loop.
    log_norm: f64,
}

impl ConjugateNormalMeanModel {
    pub const DEFAULT_BOUND: f64 = 20.0;

    pub fn new(d: usize, sigma: f64, tau: f64, mu0: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite() && tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter("sigma and tau must be positive".into()));
        }
        if mu0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mu0.len() });
        }
        let optimal_loss = 0.5 * d as f64 * (LN_2PI + 2.0 * sigma.ln()) + 0.5 * d as f64;
        let model = Self {
            d,
            sigma,
            tau,
            prior_mean: vec![0.0; d],
            truth: TruthMeta {
                w0: Parameter(mu0.clone()),
                optimal_loss,
                known_lambda: None,
                known_lambda_source: None,
            },
            mu0,
            bounds: Bounds::cube(d, Self::DEFAULT_BOUND)?,
            log_norm: -0.5 * d as f64 * (LN_2PI + 2.0 * sigma.ln()),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_bound(mut self, half_width: f64) -> Result<Self> {
        self.bounds = Bounds::cube(self.d, half_width)?;
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior_mean(mut self, prior_mean: Vec<f64>) -> Result<Self> {
        if prior_mean.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: prior_mean.len() });
        }
        self.prior_mean = prior_mean;
        Ok(self)
    }

    pub fn with_known_lambda(mut self, lambda: f64, source: impl Into<String>) -> Self {
        self.truth.known_lambda = Some(lambda);
        self.truth.known_lambda_source = Some(source.into());
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.bounds.contains(&self.mu0) {
            return Err(Error::InvalidParameter("mu0 lies outside the parameter box".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    /// Half-width of the parameter box.
    pub fn bound(&self) -> f64 {
        self.bounds.upper[0]
    }

    fn log_norm(&self) -> f64 {
        self.log_norm
    }
}

impl ModelSpec for ConjugateNormalMeanModel {
    fn name(&self) -> &str {
        "conjugate_normal_mean"
    }

    fn parameter_dim(&self) -> usize {
        self.d
    }

    fn observation_dim(&self) -> usize {
        self.d
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn log_density(&self, x: &[f64], w: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        self.log_norm() - sq / (2.0 * self.sigma * self.sigma)
    }

    fn log_prior(&self, w: &[f64]) -> f64 {
        let sq: f64 = w.iter().zip(&self.prior_mean).map(|(a, b)| (a - b) * (a - b)).sum();
        -sq / (2.0 * self.tau * self.tau)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn log_density_gradient(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let s2 = self.sigma * self.sigma;
        for ((o, a), b) in out.iter_mut().zip(x).zip(w) {
            *o = (a - b) / s2;
        }
        Ok(())
    }

    fn log_prior_gradient(&self, w: &[f64], out: &mut [f64]) {
        let t2 = self.tau * self.tau;
        for ((o, a), m) in out.iter_mut().zip(w).zip(&self.prior_mean) {
            *o = -(a - m) / t2;
        }
    }

    // sum_i ||X_i - w||^2 = S + n ||xbar - w||^2
    fn log_likelihood(&self, data: &Dataset, w: &[f64]) -> f64 {
        let n = data.len() as f64;
        let shift: f64 = data.mean().iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        n * self.log_norm() - (data.centered_sum_sq() + n * shift) / (2.0 * self.sigma * self.sigma)
    }

    fn log_likelihood_gradient(&self, data: &Dataset, w: &[f64], out: &mut [f64]) -> Result<()> {
        let scale = data.len() as f64 / (self.sigma * self.sigma);
        for ((o, m), b) in out.iter_mut().zip(data.mean()).zip(w) {
            *o = scale * (m - b);
        }
        Ok(())
    }

    fn truth(&self) -> Option<&TruthMeta> {
        Some(&self.truth)
    }

    fn sample_observation(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        for (o, m) in out.iter_mut().zip(&self.mu0) {
            let z: f64 = StandardNormal.sample(rng);
            *o = m + self.sigma * z;
        }
        Ok(())
    }

    fn truth_log_density(&self, x: &[f64]) -> Option<f64> {
        Some(self.log_density(x, &self.mu0))
    }
}
