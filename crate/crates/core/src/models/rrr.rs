use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::LN_2PI;
use crate::error::{Error, Result};
use crate::model::{Bounds, ModelSpec, Parameter, TruthMeta};

/// Reduced rank regression `y = B A x + e`, `e ~ N(0, I_N)`, with
/// `A` of shape `H x M` and `B` of shape `N x H`.
///
/// Observations are packed as `(x_1..x_M, y_1..y_N)`. The parameter vector
/// holds `A` row-major followed by `B` row-major, so `d = H (M + N)`.
///
/// The model conditions on `x`. Its density is completed with the true
/// x-marginal `N(0, I_M)`, an additive constant shared by every parameter,
/// so that losses are on the joint scale; differences between criteria are
/// unaffected. Prior is uniform on `[-B, B]^d`.
#[derive(Debug, Clone)]
pub struct ReducedRankRegressionModel {
    input_dim: usize,
    output_dim: usize,
    rank: usize,
    a0: Vec<f64>,
    b0: Vec<f64>,
    bounds: Bounds,
    truth: TruthMeta,
}

impl ReducedRankRegressionModel {
    /// `a0` is `H x M` row-major and `b0` is `N x H` row-major.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        rank: usize,
        a0: Vec<f64>,
        b0: Vec<f64>,
        half_width: f64,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || rank == 0 {
            return Err(Error::InvalidParameter("M, N and H must be >= 1".into()));
        }
        if a0.len() != rank * input_dim {
            return Err(Error::DimensionMismatch { expected: rank * input_dim, got: a0.len() });
        }
        if b0.len() != output_dim * rank {
            return Err(Error::DimensionMismatch { expected: output_dim * rank, got: b0.len() });
        }
        let d = rank * (input_dim + output_dim);
        let bounds = Bounds::cube(d, half_width)?;
        let mut w0 = a0.clone();
        w0.extend_from_slice(&b0);
        if !bounds.contains(&w0) {
            return Err(Error::InvalidParameter("true (A0, B0) lies outside the parameter box".into()));
        }
        let optimal_loss = 0.5 * (input_dim + output_dim) as f64 * (LN_2PI + 1.0);
        Ok(Self {
            input_dim,
            output_dim,
            rank,
            a0,
            b0,
            bounds,
            truth: TruthMeta { w0: Parameter(w0), optimal_loss, known_lambda: None, known_lambda_source: None },
        })
    }

    pub fn with_known_lambda(mut self, lambda: f64, source: impl Into<String>) -> Self {
        self.truth.known_lambda = Some(lambda);
        self.truth.known_lambda_source = Some(source.into());
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        w.split_at(self.rank * self.input_dim)
    }

    /// Returns `A x` and the residual `y - B A x`.
    fn forward(&self, obs: &[f64], a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (x, y) = obs.split_at(self.input_dim);
        let ax: Vec<f64> = a.chunks_exact(self.input_dim).map(|row| dot(row, x)).collect();
        let resid = b.chunks_exact(self.rank).zip(y).map(|(row, yk)| yk - dot(row, &ax)).collect();
        (ax, resid)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl ModelSpec for ReducedRankRegressionModel {
    fn name(&self) -> &str {
        "reduced_rank_regression"
    }

    fn parameter_dim(&self) -> usize {
        self.rank * (self.input_dim + self.output_dim)
    }

    fn observation_dim(&self) -> usize {
        self.input_dim + self.output_dim
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn log_density(&self, obs: &[f64], w: &[f64]) -> f64 {
        let (a, b) = self.split(w);
        let (_, resid) = self.forward(obs, a, b);
        let x = &obs[..self.input_dim];
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        let xss: f64 = x.iter().map(|v| v * v).sum();
        -0.5 * (self.input_dim + self.output_dim) as f64 * LN_2PI - 0.5 * rss - 0.5 * xss
    }

    fn log_prior(&self, _w: &[f64]) -> f64 {
        0.0
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn log_density_gradient(&self, obs: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        let (a, b) = self.split(w);
        let (ax, resid) = self.forward(obs, a, b);
        let x = &obs[..self.input_dim];
        let (ga, gb) = out.split_at_mut(self.rank * self.input_dim);
        // d/dA = (B^T r) x^T
        for h in 0..self.rank {
            let btr: f64 = (0..self.output_dim).map(|k| b[k * self.rank + h] * resid[k]).sum();
            for (j, xj) in x.iter().enumerate() {
                ga[h * self.input_dim + j] = btr * xj;
            }
        }
        // d/dB = r (A x)^T
        for (k, rk) in resid.iter().enumerate() {
            for (h, axh) in ax.iter().enumerate() {
                gb[k * self.rank + h] = rk * axh;
            }
        }
        Ok(())
    }

    fn truth(&self) -> Option<&TruthMeta> {
        Some(&self.truth)
    }

    fn sample_observation(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let (x, y) = out.split_at_mut(self.input_dim);
        for v in x.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let ax: Vec<f64> = self.a0.chunks_exact(self.input_dim).map(|row| dot(row, x)).collect();
        for (yk, row) in y.iter_mut().zip(self.b0.chunks_exact(self.rank)) {
            let e: f64 = StandardNormal.sample(rng);
            *yk = dot(row, &ax) + e;
        }
        Ok(())
    }

    fn truth_log_density(&self, obs: &[f64]) -> Option<f64> {
        Some(self.log_density(obs, &self.truth.w0))
    }
}
