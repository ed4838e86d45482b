//! The statistical-model abstraction and the empirical and expected losses
//! `L_n(w) = -(1/n) sum_i log p(X_i|w)` and `L(w) = -E_q[log p(X|w)]`.

use std::io::Read;
use std::ops::Deref;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An immutable set of `n` observations, each a real vector of dimension `p`.
///
/// The per-coordinate mean and the centred sum of squares are computed once at
/// construction so that Gaussian-type models can evaluate the total
/// log-likelihood in O(p).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    mean: Vec<f64>,
    centered_sum_sq: f64,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::InvalidDataset("no observations".into()))?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "observation {i} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(dim, values)
    }

    /// Builds a dataset from row-major values.
    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("observation dimension must be >= 1".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidDataset(format!("{} values do not form rows of dimension {dim}", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite value in observation {}", pos / dim)));
        }
        let n = values.len() / dim;
        let mut mean = vec![0.0; dim];
        for row in values.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered_sum_sq = values
            .chunks_exact(dim)
            .map(|row| row.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
            .sum();
        Ok(Self { dim, values, mean, centered_sum_sq })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `sum_i ||X_i - mean||^2`.
    pub fn centered_sum_sq(&self) -> f64 {
        self.centered_sum_sq
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::from_flat(self.dim, values)
    }

    /// Reads one observation per row. A first row that does not parse as
    /// numbers is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => rows.push(row),
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidDataset(format!("row {}: {e}", line + 1)));
                }
            }
        }
        Self::new(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter(pub Vec<f64>);

impl Deref for Parameter {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Parameter {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Strictly positive, finite inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct InverseTemperature(f64);

impl InverseTemperature {
    /// Tolerance used when checking that a chain sits at `1/log n`.
    pub const WBIC_TOLERANCE: f64 = 1e-12;

    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidTemperature(beta))
        }
    }

    /// The WBIC temperature `1/log n`; needs `n >= 2`.
    pub fn wbic(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDataset(format!("n = {n}; the WBIC temperature needs n >= 2")));
        }
        Self::new(1.0 / (n as f64).ln())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Errors unless this is `1/log n` to within [`Self::WBIC_TOLERANCE`].
    pub fn require_wbic(self, n: usize) -> Result<()> {
        let expected = Self::wbic(n)?.0;
        if (self.0 - expected).abs() <= Self::WBIC_TOLERANCE {
            Ok(())
        } else {
            Err(Error::WrongTemperature { expected, got: self.0 })
        }
    }
}

/// Axis-aligned compact parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l >= u || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidParameter("bounds must satisfy lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim() && w.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| l <= x && x <= u)
    }
}

/// Optional closed-form facts about the truth, supplied by the experimenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMeta {
    /// A minimiser of `L(w)`.
    pub w0: Parameter,
    /// `L(w0)`.
    pub optimal_loss: f64,
    pub known_lambda: Option<f64>,
    pub known_lambda_source: Option<String>,
}

/// A statistical model `p(x|w)` with prior `phi(w)` on a compact box.
///
/// Implementations must be pure: every method is called concurrently from
/// several threads. The prior only needs to be known up to an additive
/// constant of its log.
pub trait ModelSpec: Send + Sync {
    fn name(&self) -> &str;

    fn parameter_dim(&self) -> usize;

    fn observation_dim(&self) -> usize;

    fn bounds(&self) -> &Bounds;

    /// `log p(x|w)`. Callers guarantee matching dimensions.
    fn log_density(&self, x: &[f64], w: &[f64]) -> f64;

    /// `log phi(w)` up to an additive constant.
    fn log_prior(&self, w: &[f64]) -> f64;

    fn has_gradient(&self) -> bool {
        false
    }

    /// Writes `d/dw log p(x|w)` into `out`.
    fn log_density_gradient(&self, _x: &[f64], _w: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::GradientUnavailable(self.name().to_string()))
    }

    /// Writes `d/dw log phi(w)` into `out`.
    fn log_prior_gradient(&self, _w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
    }

    /// `sum_i log p(X_i|w)`. Models with sufficient statistics override this.
    fn log_likelihood(&self, data: &Dataset, w: &[f64]) -> f64 {
        data.rows().map(|x| self.log_density(x, w)).sum()
    }

    /// Writes `sum_i d/dw log p(X_i|w)` into `out`.
    fn log_likelihood_gradient(&self, data: &Dataset, w: &[f64], out: &mut [f64]) -> Result<()> {
        let mut g = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        for x in data.rows() {
            self.log_density_gradient(x, w, &mut g)?;
            out.iter_mut().zip(&g).for_each(|(o, gi)| *o += gi);
        }
        Ok(())
    }

    /// Validates a parameter: dimension and box membership by default.
    fn check_parameter(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.parameter_dim() {
            return Err(Error::DimensionMismatch { expected: self.parameter_dim(), got: w.len() });
        }
        if !self.bounds().contains(w) {
            return Err(Error::InvalidParameter(format!("{w:?} lies outside the parameter box")));
        }
        Ok(())
    }

    fn truth(&self) -> Option<&TruthMeta> {
        None
    }

    /// Draws one observation from the true distribution `q` into `out`.
    fn sample_observation(&self, _rng: &mut dyn RngCore, _out: &mut [f64]) -> Result<()> {
        Err(Error::NoTruthSampler(self.name().to_string()))
    }

    /// `log q(x)` when the truth density is known in closed form.
    fn truth_log_density(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// `log p(x|w)` with dimension and parameter checks.
pub fn checked_log_density(model: &dyn ModelSpec, x: &[f64], w: &[f64]) -> Result<f64> {
    if x.len() != model.observation_dim() {
        return Err(Error::DimensionMismatch { expected: model.observation_dim(), got: x.len() });
    }
    model.check_parameter(w)?;
    Ok(model.log_density(x, w))
}

/// `-log p(X_i|w)` for every observation, failing on the first non-finite
/// value.
pub fn pointwise_losses(model: &dyn ModelSpec, data: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    if data.dim() != model.observation_dim() {
        return Err(Error::DimensionMismatch { expected: model.observation_dim(), got: data.dim() });
    }
    model.check_parameter(w)?;
    data.rows()
        .enumerate()
        .map(|(index, x)| {
            let lp = model.log_density(x, w);
            if lp.is_finite() {
                Ok(-lp)
            } else {
                Err(Error::NonFiniteLogDensity { index })
            }
        })
        .collect()
}

/// Empirical loss `L_n(w)`.
pub fn empirical_loss(model: &dyn ModelSpec, data: &Dataset, w: &[f64]) -> Result<f64> {
    let losses = pointwise_losses(model, data, w)?;
    Ok(crate::stats::mean(&losses))
}

/// Monte Carlo estimate of `L(w)` from fresh draws of the truth.
pub fn expected_loss_mc(model: &dyn ModelSpec, w: &[f64], test_draws: &Dataset) -> Result<f64> {
    empirical_loss(model, test_draws, w)
}

/// `n` i.i.d. observations from the model's truth, deterministic in `seed`.
pub fn sample_truth(model: &dyn ModelSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidDataset(format!("n = {n}; need n >= 2")));
    }
    let p = model.observation_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * p];
    for row in values.chunks_exact_mut(p) {
        model.sample_observation(&mut rng, row)?;
    }
    Dataset::from_flat(p, values)
}

/// Wraps a model and adds a constant to its log-prior.
#[derive(Debug, Clone)]
pub struct PriorShift<M> {
    pub inner: M,
    pub shift: f64,
}

impl<M: ModelSpec> ModelSpec for PriorShift<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn parameter_dim(&self) -> usize {
        self.inner.parameter_dim()
    }
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn bounds(&self) -> &Bounds {
        self.inner.bounds()
    }
    fn log_density(&self, x: &[f64], w: &[f64]) -> f64 {
        self.inner.log_density(x, w)
    }
    fn log_prior(&self, w: &[f64]) -> f64 {
        self.inner.log_prior(w) + self.shift
    }
    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }
    fn log_density_gradient(&self, x: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.log_density_gradient(x, w, out)
    }
    fn log_prior_gradient(&self, w: &[f64], out: &mut [f64]) {
        self.inner.log_prior_gradient(w, out)
    }
    fn log_likelihood(&self, data: &Dataset, w: &[f64]) -> f64 {
        self.inner.log_likelihood(data, w)
    }
    fn log_likelihood_gradient(&self, data: &Dataset, w: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.log_likelihood_gradient(data, w, out)
    }
    fn check_parameter(&self, w: &[f64]) -> Result<()> {
        self.inner.check_parameter(w)
    }
    fn truth(&self) -> Option<&TruthMeta> {
        self.inner.truth()
    }
    fn sample_observation(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        self.inner.sample_observation(rng, out)
    }
    fn truth_log_density(&self, x: &[f64]) -> Option<f64> {
        self.inner.truth_log_density(x)
    }
}
