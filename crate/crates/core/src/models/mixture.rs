use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{std_normal_log_density, LN_2PI};
use crate::error::{Error, Result};
use crate::model::{Bounds, ModelSpec, Parameter, TruthMeta};

/// `p(x|a,b) = (1-a) N(x|0,1) + a N(x|b,1)` with a uniform prior on
/// `[0,1] x [-B,B]`. The truth is `N(0,1)`, reached on the whole set
/// `{a = 0} u {b = 0}`, which makes the model singular.
///
/// With `fixed_b` set, only `a` is free and the parameter is one-dimensional.
#[derive(Debug, Clone)]
pub struct GaussianMixtureModel {
    fixed_b: Option<f64>,
    bounds: Bounds,
    truth: TruthMeta,
}

impl GaussianMixtureModel {
    pub fn new(half_width: f64) -> Result<Self> {
        Ok(Self {
            fixed_b: None,
            bounds: Bounds::new(vec![0.0, -half_width], vec![1.0, half_width])?,
            truth: Self::truth_meta(vec![0.0, 0.0]),
        })
    }

    /// The one-parameter sub-model with displacement pinned at `b`.
    pub fn with_fixed_b(b: f64) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::InvalidParameter("b must be finite".into()));
        }
        Ok(Self { fixed_b: Some(b), bounds: Bounds::new(vec![0.0], vec![1.0])?, truth: Self::truth_meta(vec![0.0]) })
    }

    pub fn with_known_lambda(mut self, lambda: f64, source: impl Into<String>) -> Self {
        self.truth.known_lambda = Some(lambda);
        self.truth.known_lambda_source = Some(source.into());
        self
    }

    pub fn fixed_b(&self) -> Option<f64> {
        self.fixed_b
    }

    fn truth_meta(w0: Vec<f64>) -> TruthMeta {
        TruthMeta { w0: Parameter(w0), optimal_loss: 0.5 * LN_2PI + 0.5, known_lambda: None, known_lambda_source: None }
    }

    #[inline]
    fn split(&self, w: &[f64]) -> (f64, f64) {
        match self.fixed_b {
            Some(b) => (w[0], b),
            None => (w[0], w[1]),
        }
    }

    /// Returns `(log p, log N(x|0,1), log N(x|b,1))`.
    #[inline]
    fn components(&self, x: f64, a: f64, b: f64) -> (f64, f64, f64) {
        let l0 = std_normal_log_density(x, 0.0);
        let l1 = std_normal_log_density(x, b);
        let lp = if a == 0.0 {
            l0
        } else if a == 1.0 {
            l1
        } else {
            let t0 = (1.0 - a).ln() + l0;
            let t1 = a.ln() + l1;
            let m = t0.max(t1);
            m + ((t0 - m).exp() + (t1 - m).exp()).ln()
        };
        (lp, l0, l1)
    }
}

impl ModelSpec for GaussianMixtureModel {
    fn name(&self) -> &str {
        "gaussian_mixture"
    }

    fn parameter_dim(&self) -> usize {
        if self.fixed_b.is_some() {
            1
        } else {
            2
        }
    }

    fn observation_dim(&self) -> usize {
        1
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn log_density(&self, x: &[f64], w: &[f64]) -> f64 {
        let (a, b) = self.split(w);
        self.components(x[0], a, b).0
    }

    fn log_prior(&self, _w: &[f64]) -> f64 {
        0.0
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn log_density_gradient(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let (a, b) = self.split(w);
        let (lp, l0, l1) = self.components(x[0], a, b);
        let r1 = (l1 - lp).exp();
        out[0] = r1 - (l0 - lp).exp();
        if self.fixed_b.is_none() {
            out[1] = a * r1 * (x[0] - b);
        }
        Ok(())
    }

    fn check_parameter(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.parameter_dim() {
            return Err(Error::DimensionMismatch { expected: self.parameter_dim(), got: w.len() });
        }
        if !(0.0..=1.0).contains(&w[0]) {
            return Err(Error::InvalidParameter(format!("mixing weight a = {} outside [0, 1]", w[0])));
        }
        if !self.bounds.contains(w) {
            return Err(Error::InvalidParameter(format!("{w:?} lies outside the parameter box")));
        }
        Ok(())
    }

    fn truth(&self) -> Option<&TruthMeta> {
        Some(&self.truth)
    }

    fn sample_observation(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        out[0] = StandardNormal.sample(rng);
        Ok(())
    }

    fn truth_log_density(&self, x: &[f64]) -> Option<f64> {
        Some(std_normal_log_density(x[0], 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::checked_log_density;
    use crate::models::testutil::assert_gradient_matches;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_weight_is_standard_normal() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        for &x in &[-2.0, 0.0, 1.3] {
            let want = std_normal_log_density(x, 0.0);
            for b in [-5.0, -1.0, 0.0, 2.5, 5.0] {
                assert_eq!(m.log_density(&[x], &[0.0, b]), want);
            }
            assert_eq!(m.log_density(&[x], &[1.0, 0.0]), want);
        }
    }

    #[test]
    fn half_mixture_matches_direct_sum() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        let n = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let direct = (0.5 * n(0.0, 0.0) + 0.5 * n(0.0, 3.0)).ln();
        let v = m.log_density(&[0.0], &[0.5, 3.0]);
        assert!((v - direct).abs() < 1e-15 * direct.abs().max(1.0), "{v} vs {direct}");
    }

    #[test]
    fn weight_outside_unit_interval_is_an_error() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        assert!(checked_log_density(&m, &[0.0], &[1.5, 0.0]).is_err());
        assert!(checked_log_density(&m, &[0.0], &[-0.1, 0.0]).is_err());
        assert!(checked_log_density(&m, &[0.0], &[0.3, 0.0]).is_ok());
    }

    #[test]
    fn finite_far_in_the_tails() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        assert!(m.log_density(&[40.0], &[0.3, -5.0]).is_finite());
        assert!(m.log_density(&[-40.0], &[0.999, 5.0]).is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        let fixed = GaussianMixtureModel::with_fixed_b(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = [rng.random_range(-4.0..4.0)];
            let w = [rng.random_range(0.05..0.95), rng.random_range(-4.0..4.0)];
            assert_gradient_matches(&m, &x, &w);
            assert_gradient_matches(&fixed, &x, &w[..1]);
        }
    }

    #[test]
    fn flat_direction_at_zero_weight() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        let base = m.log_density(&[0.4], &[0.0, -5.0]);
        for i in 0..=100 {
            let b = -5.0 + 0.1 * i as f64;
            assert_eq!(m.log_density(&[0.4], &[0.0, b]), base);
        }
    }

    #[test]
    fn continuous_in_the_weight() {
        let m = GaussianMixtureModel::new(5.0).unwrap();
        let at0 = m.log_density(&[0.8], &[0.0, 2.0]);
        let near = m.log_density(&[0.8], &[1e-12, 2.0]);
        assert!((at0 - near).abs() < 1e-10);
        let at1 = m.log_density(&[0.8], &[1.0, 2.0]);
        let near1 = m.log_density(&[0.8], &[1.0 - 1e-12, 2.0]);
        assert!((at1 - near1).abs() < 1e-10);
    }
}
