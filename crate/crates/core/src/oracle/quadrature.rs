//! Tensor-grid Simpson quadrature over the tempered posterior for models
//! with one or two parameters.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::criteria::PosteriorFunctionals;
use crate::error::{Error, Result};
use crate::model::{Dataset, InverseTemperature, ModelSpec};
use crate::stats::{compensated_sum, LogSumExp};

const MAX_DIM: usize = 2;
const MAX_NODES: usize = 401;
/// Nodes whose log target falls this far below the maximum are treated as
/// carrying no mass when the integration region is narrowed.
const LOG_MASS_CUTOFF: f64 = 40.0;
const ZOOM_ROUNDS: usize = 3;

/// Normalised quadrature rule for `E_w^b[.]` on a rectangular region.
#[derive(Clone)]
pub struct QuadratureOracle<'a> {
    model: &'a dyn ModelSpec,
    data: &'a Dataset,
    beta: InverseTemperature,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Flat node coordinates, `dim` per node.
    nodes: Vec<f64>,
    /// Log of the normalised posterior weight of each node.
    log_weights: Vec<f64>,
    /// `sum_i log p(X_i|w)` at each node.
    loglik: Vec<f64>,
}

fn simpson_weights(lo: f64, hi: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / (m - 1) as f64;
    let pts = (0..m).map(|k| lo + h * k as f64).collect();
    let w = (0..m)
        .map(|k| {
            let c = if k == 0 || k == m - 1 {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (pts, w)
}

fn check_dim(model: &dyn ModelSpec) -> Result<usize> {
    let d = model.parameter_dim();
    if d == 0 || d > MAX_DIM {
        return Err(Error::Quadrature(format!("grid quadrature supports 1 or 2 parameters, got {d}")));
    }
    Ok(d)
}

/// Tensor grid with `m` points per axis: (flat nodes, log Simpson weights).
fn tensor_grid(lower: &[f64], upper: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let axes: Vec<_> = lower.iter().zip(upper).map(|(&lo, &hi)| simpson_weights(lo, hi, m)).collect();
    let mut nodes = Vec::new();
    let mut logw = Vec::new();
    match axes.as_slice() {
        [(p, w)] => {
            nodes.extend_from_slice(p);
            logw.extend(w.iter().map(|v| v.ln()));
        }
        [(p0, w0), (p1, w1)] => {
            for (a, wa) in p0.iter().zip(w0) {
                for (b, wb) in p1.iter().zip(w1) {
                    nodes.extend([*a, *b]);
                    logw.push((wa * wb).ln());
                }
            }
        }
        _ => unreachable!("dimension checked by caller"),
    }
    (nodes, logw)
}

fn log_targets(model: &dyn ModelSpec, data: &Dataset, beta: f64, nodes: &[f64], dim: usize) -> Result<Vec<f64>> {
    nodes
        .par_chunks(dim)
        .map(|w| {
            let v = model.log_likelihood(data, w);
            if v.is_nan() {
                return Err(Error::Quadrature(format!("log-likelihood is NaN at {w:?}")));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()
        .map(|ll| ll.into_iter().map(|l| beta * l).collect())
}

impl<'a> QuadratureOracle<'a> {
    /// Simpson rule with `nodes_per_dim` (odd, 3..=401) points per axis on
    /// `[lower, upper]`, which must lie inside the model's box.
    pub fn new(
        model: &'a dyn ModelSpec,
        data: &'a Dataset,
        beta: InverseTemperature,
        lower: &[f64],
        upper: &[f64],
        nodes_per_dim: usize,
    ) -> Result<Self> {
        let dim = check_dim(model)?;
        if data.dim() != model.observation_dim() {
            return Err(Error::DimensionMismatch { expected: model.observation_dim(), got: data.dim() });
        }
        if nodes_per_dim < 3 || nodes_per_dim.is_multiple_of(2) || nodes_per_dim > MAX_NODES {
            return Err(Error::Quadrature(format!(
                "nodes per axis must be odd and in 3..={MAX_NODES}, got {nodes_per_dim}"
            )));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: lower.len().min(upper.len()) });
        }
        let b = model.bounds();
        for j in 0..dim {
            if lower[j].partial_cmp(&upper[j]) != Some(Ordering::Less) || lower[j] < b.lower[j] || upper[j] > b.upper[j]
            {
                return Err(Error::Quadrature(format!("region axis {j} is empty or leaves the box")));
            }
        }
        let (nodes, logw) = tensor_grid(lower, upper, nodes_per_dim);
        let targets = log_targets(model, data, beta.value(), &nodes, dim)?;
        let mut lse = LogSumExp::default();
        let mut unnorm = Vec::with_capacity(targets.len());
        let mut loglik = Vec::with_capacity(targets.len());
        for ((t, lw), w) in targets.iter().zip(&logw).zip(nodes.chunks_exact(dim)) {
            let u = t + lw + model.log_prior(w);
            lse.push(u);
            unnorm.push(u);
            loglik.push(t / beta.value());
        }
        let z = lse.value();
        if !z.is_finite() {
            return Err(Error::Quadrature("posterior has no finite mass on the grid".into()));
        }
        Ok(Self {
            model,
            data,
            beta,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            nodes,
            log_weights: unnorm.into_iter().map(|u| u - z).collect(),
            loglik,
        })
    }

    /// Locates the posterior mass with coarse scans of the box, then builds a
    /// rule with `nodes_per_dim` points per axis on the narrowed region.
    pub fn auto(
        model: &'a dyn ModelSpec,
        data: &'a Dataset,
        beta: InverseTemperature,
        nodes_per_dim: usize,
    ) -> Result<Self> {
        let dim = check_dim(model)?;
        let b = model.bounds();
        let mut lower = b.lower.clone();
        let mut upper = b.upper.clone();
        let scan = if dim == 1 { 2001 } else { 201 };
        for _ in 0..ZOOM_ROUNDS {
            let cells: Vec<f64> = lower.iter().zip(&upper).map(|(lo, hi)| (hi - lo) / (scan - 1) as f64).collect();
            let (nodes, _) = tensor_grid(&lower, &upper, scan);
            let targets = log_targets(model, data, beta.value(), &nodes, dim)?;
            let scores: Vec<f64> =
                targets.iter().zip(nodes.chunks_exact(dim)).map(|(t, w)| t + model.log_prior(w)).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::Quadrature("posterior has no finite mass in the box".into()));
            }
            let mut new_lo = vec![f64::INFINITY; dim];
            let mut new_hi = vec![f64::NEG_INFINITY; dim];
            for (s, w) in scores.iter().zip(nodes.chunks_exact(dim)) {
                if *s >= max - LOG_MASS_CUTOFF {
                    for j in 0..dim {
                        new_lo[j] = new_lo[j].min(w[j]);
                        new_hi[j] = new_hi[j].max(w[j]);
                    }
                }
            }
            let mut shrunk = false;
            for j in 0..dim {
                let lo = (new_lo[j] - 2.0 * cells[j]).max(b.lower[j]);
                let hi = (new_hi[j] + 2.0 * cells[j]).min(b.upper[j]);
                shrunk |= hi - lo < 0.5 * (upper[j] - lower[j]);
                lower[j] = lo;
                upper[j] = hi;
            }
            if !shrunk {
                break;
            }
        }
        Self::new(model, data, beta, &lower, &upper, nodes_per_dim)
    }

    pub fn region(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    /// `E_w^b[f(w)]`.
    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let dim = self.lower.len();
        compensated_sum(self.nodes.chunks_exact(dim).zip(&self.log_weights).map(|(w, lw)| lw.exp() * f(w)))
    }

    /// `log E_w^b[p(x|w)]`.
    pub fn predictive_log_density(&self, x: &[f64]) -> f64 {
        let dim = self.lower.len();
        let mut lse = LogSumExp::default();
        for (w, lw) in self.nodes.chunks_exact(dim).zip(&self.log_weights) {
            lse.push(lw + self.model.log_density(x, w));
        }
        lse.value()
    }

    /// Exact-style functionals (weighted, no Monte Carlo error).
    pub fn functionals(&self) -> Result<PosteriorFunctionals> {
        let dim = self.lower.len();
        let weights: Vec<f64> = self.log_weights.iter().map(|lw| lw.exp()).collect();
        let mode = self
            .log_weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .expect("grid is non-empty");
        let w_mode = &self.nodes[mode * dim..(mode + 1) * dim];

        let per_datum: Vec<(f64, f64, f64)> = self
            .data
            .values()
            .par_chunks(self.data.dim())
            .map(|x| {
                // Shift by the value at the heaviest node to keep the
                // second moment well conditioned.
                let c = self.model.log_density(x, w_mode);
                let mut m1 = Vec::with_capacity(weights.len());
                let mut m2 = Vec::with_capacity(weights.len());
                let mut lse = LogSumExp::default();
                for ((w, wt), lw) in self.nodes.chunks_exact(dim).zip(&weights).zip(&self.log_weights) {
                    let l = self.model.log_density(x, w);
                    let dl = l - c;
                    m1.push(wt * dl);
                    m2.push(wt * dl * dl);
                    lse.push(lw + l);
                }
                let e1 = compensated_sum(m1);
                let e2 = compensated_sum(m2);
                (c + e1, (e2 - e1 * e1).max(0.0), lse.value())
            })
            .collect();
        if per_datum.iter().any(|(m, v, p)| !(m.is_finite() && v.is_finite() && p.is_finite())) {
            return Err(Error::Quadrature("non-finite per-datum functional".into()));
        }

        let c = -self.loglik[mode];
        let e_dev = compensated_sum(weights.iter().zip(&self.loglik).map(|(wt, l)| wt * (-l - c)));
        let e_sq = compensated_sum(weights.iter().zip(&self.loglik).map(|(wt, l)| {
            let d = -l - c - e_dev;
            wt * d * d
        }));

        let (mean, rest): (Vec<f64>, Vec<(f64, f64)>) = per_datum.into_iter().map(|(m, v, p)| (m, (v, p))).unzip();
        let (var, pred): (Vec<f64>, Vec<f64>) = rest.into_iter().unzip();
        Ok(PosteriorFunctionals::exact(self.beta, mean, var, pred, c + e_dev, e_sq))
    }
}

/// `E_w^b[f(w)]` with an automatically placed 401-point-per-axis rule.
pub fn quadrature_expectation<F: Fn(&[f64]) -> f64>(
    model: &dyn ModelSpec,
    data: &Dataset,
    beta: InverseTemperature,
    f: F,
) -> Result<f64> {
    Ok(QuadratureOracle::auto(model, data, beta, MAX_NODES)?.expectation(f))
}

/// `G_n(b) = -int q(x) log E_w^b[p(x|w)] dx` for one-dimensional
/// observations, by Simpson's rule over `x_range` with `x_nodes` points.
pub fn quadrature_bayes_gen_loss(oracle: &QuadratureOracle<'_>, x_range: (f64, f64), x_nodes: usize) -> Result<f64> {
    if oracle.model.observation_dim() != 1 {
        return Err(Error::Quadrature("generalization loss quadrature needs scalar observations".into()));
    }
    if x_nodes < 3 || x_nodes.is_multiple_of(2) || x_range.0.partial_cmp(&x_range.1) != Some(Ordering::Less) {
        return Err(Error::Quadrature("x grid must have an odd node count >= 3 on a non-empty range".into()));
    }
    if oracle.model.truth_log_density(&[x_range.0]).is_none() {
        return Err(Error::NoTruthSampler(oracle.model.name().to_string()));
    }
    let (xs, ws) = simpson_weights(x_range.0, x_range.1, x_nodes);
    let terms: Vec<f64> = xs
        .par_iter()
        .zip(&ws)
        .map(|(x, w)| {
            let q = oracle.model.truth_log_density(&[*x]).expect("checked above").exp();
            -w * q * oracle.predictive_log_density(&[*x])
        })
        .collect();
    Ok(compensated_sum(terms))
}
