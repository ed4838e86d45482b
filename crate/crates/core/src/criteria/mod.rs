//! Information criteria computed from posterior functionals.
//!
//! Everything here consumes a [`PosteriorFunctionals`], which can come from an
//! MCMC chain ([`functionals`]) or from an exact oracle. The formulas are:
//!
//! * training loss `T_n(b) = -(1/n) sum_i log E_w^b[p(X_i|w)]`
//! * functional variance `V_n(b) = sum_i V_w^b[log p(X_i|w)]`
//! * WAIC `T_n(b) + b V_n(b) / n`
//! * WBIC `E_w^{1/log n}[n L_n(w)]`
//! * Imai RLCT estimate `(1/log n)^2 V_w^{1/log n}[n L_n(w)]`
//! * singular fluctuation plug-in `(b/2) V_n(b)`
//! * WAIC predicted from the WBIC chain alone,
//!   `WBIC - lambda_hat (log n - 1) + V_n(1/log n) / (2 log n)`, on the
//!   `n * WAIC` scale, together with its general-`b` form.
//!
//! Monte Carlo standard errors use the delta method: each estimator is
//! linearised into a per-draw influence series whose SE is
//! `sd / sqrt(ESS)` on that series.

mod report;

pub use report::{ChainProvenance, CriteriaMcSe, CriteriaReport};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, InverseTemperature, ModelSpec};
use crate::sampler::{diagnostics, Chain};
use crate::stats::{self, compensated_sum};

/// Rows per work unit when scanning (draw, datum) pairs. Fixed so that the
/// reduction order does not depend on the thread count.
const CHUNK_ROWS: usize = 64;

/// Per-draw series needed for delta-method standard errors.
#[derive(Debug, Clone, PartialEq)]
struct DrawSeries {
    segments: Vec<usize>,
    /// `n L_n(w_s)`.
    nln: Vec<f64>,
    /// `sum_i (log p(X_i|w_s) - mean_i)^2`.
    sq_dev: Vec<f64>,
    /// `sum_i p(X_i|w_s) / E_w[p(X_i|w)]`.
    pred_ratio: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EssSummary {
    pub n_draws: usize,
    /// Smallest per-coordinate ESS of the chain.
    pub min_coordinate: f64,
}

/// Posterior means and variances of the per-datum log-likelihoods and of
/// `n L_n(w)` at one inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFunctionals {
    pub beta: InverseTemperature,
    pub n: usize,
    /// `E_w^b[log p(X_i|w)]`.
    pub per_datum_logp_mean: Vec<f64>,
    /// `V_w^b[log p(X_i|w)]`.
    pub per_datum_logp_var: Vec<f64>,
    /// `log E_w^b[p(X_i|w)]`.
    pub per_datum_pred_logp: Vec<f64>,
    /// `E_w^b[n L_n(w)]`.
    pub e_nln: f64,
    /// `V_w^b[n L_n(w)]`.
    pub v_nln: f64,
    /// `None` for exact (oracle) functionals.
    pub ess_summary: Option<EssSummary>,
    series: Option<DrawSeries>,
}

/// Weights of a linear combination of the per-draw influence series.
#[derive(Debug, Clone, Copy, Default)]
struct Influence {
    nln: f64,
    nln_sq_dev: f64,
    sq_dev: f64,
    pred_ratio: f64,
}

impl PosteriorFunctionals {
    /// Functionals known exactly; their Monte Carlo SEs are zero.
    pub fn exact(
        beta: InverseTemperature,
        per_datum_logp_mean: Vec<f64>,
        per_datum_logp_var: Vec<f64>,
        per_datum_pred_logp: Vec<f64>,
        e_nln: f64,
        v_nln: f64,
    ) -> Self {
        Self {
            beta,
            n: per_datum_logp_mean.len(),
            per_datum_logp_mean,
            per_datum_logp_var,
            per_datum_pred_logp,
            e_nln,
            v_nln,
            ess_summary: None,
            series: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.series.is_none()
    }

    fn mc_se(&self, inf: Influence) -> f64 {
        let Some(s) = &self.series else {
            return 0.0;
        };
        let combined: Vec<f64> = (0..s.nln.len())
            .map(|k| {
                let dev = s.nln[k] - self.e_nln;
                inf.nln * s.nln[k]
                    + inf.nln_sq_dev * dev * dev
                    + inf.sq_dev * s.sq_dev[k]
                    + inf.pred_ratio * s.pred_ratio[k]
            })
            .collect();
        diagnostics::mc_se(&combined, &s.segments)
    }

    fn log_n(&self) -> f64 {
        (self.n as f64).ln()
    }

    fn require_wbic(&self) -> Result<()> {
        self.beta.require_wbic(self.n)
    }
}

struct ChunkResult {
    mean: Vec<f64>,
    var: Vec<f64>,
    pred: Vec<f64>,
    sum_l: Vec<f64>,
    sq_dev: Vec<f64>,
    pred_ratio: Vec<f64>,
}

fn scan_chunk(
    model: &dyn ModelSpec,
    data: &Dataset,
    chain: &Chain,
    first_row: usize,
    rows: usize,
) -> Result<ChunkResult> {
    let s_len = chain.len();
    // l[i * s_len + s]
    let mut l = vec![0.0; rows * s_len];
    for (s, w) in chain.draws().enumerate() {
        for i in 0..rows {
            let v = model.log_density(data.row(first_row + i), w);
            if !v.is_finite() {
                return Err(Error::NonFiniteLogDensity { index: first_row + i });
            }
            l[i * s_len + s] = v;
        }
    }
    let mut out = ChunkResult {
        mean: Vec::with_capacity(rows),
        var: Vec::with_capacity(rows),
        pred: Vec::with_capacity(rows),
        sum_l: vec![0.0; s_len],
        sq_dev: vec![0.0; s_len],
        pred_ratio: vec![0.0; s_len],
    };
    for i in 0..rows {
        let li = &l[i * s_len..(i + 1) * s_len];
        let max = li.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = max + compensated_sum(li.iter().map(|v| v - max)) / s_len as f64;
        let pred = max + (compensated_sum(li.iter().map(|v| (v - max).exp())) / s_len as f64).ln();
        let ss = compensated_sum(li.iter().map(|v| (v - mean) * (v - mean)));
        let var = if s_len > 1 { ss / (s_len - 1) as f64 } else { 0.0 };
        out.mean.push(mean);
        out.var.push(var);
        out.pred.push(pred);
        for (s, &v) in li.iter().enumerate() {
            out.sum_l[s] += v;
            out.sq_dev[s] += (v - mean) * (v - mean);
            out.pred_ratio[s] += (v - pred).exp();
        }
    }
    Ok(out)
}

/// Evaluates `log p(X_i|w_s)` over all (draw, datum) pairs and reduces it to
/// posterior functionals. Work is split over fixed row chunks, and partial
/// sums are combined in chunk order, so results are identical for any
/// thread count.
pub fn functionals(model: &dyn ModelSpec, data: &Dataset, chain: &Chain) -> Result<PosteriorFunctionals> {
    if data.dim() != model.observation_dim() {
        return Err(Error::DimensionMismatch { expected: model.observation_dim(), got: data.dim() });
    }
    if chain.dim() != model.parameter_dim() {
        return Err(Error::DimensionMismatch { expected: model.parameter_dim(), got: chain.dim() });
    }
    if chain.is_empty() {
        return Err(Error::NotEnoughDraws { needed: 1, have: 0 });
    }
    let n = data.len();
    let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
    let chunks: Vec<ChunkResult> = starts
        .par_iter()
        .map(|&start| scan_chunk(model, data, chain, start, CHUNK_ROWS.min(n - start)))
        .collect::<Result<_>>()?;

    let s_len = chain.len();
    let mut pf = PosteriorFunctionals {
        beta: chain.beta(),
        n,
        per_datum_logp_mean: Vec::with_capacity(n),
        per_datum_logp_var: Vec::with_capacity(n),
        per_datum_pred_logp: Vec::with_capacity(n),
        e_nln: 0.0,
        v_nln: 0.0,
        ess_summary: Some(EssSummary {
            n_draws: s_len,
            min_coordinate: chain.ess().iter().copied().fold(f64::INFINITY, f64::min),
        }),
        series: None,
    };
    let mut nln = vec![0.0; s_len];
    let mut sq_dev = vec![0.0; s_len];
    let mut pred_ratio = vec![0.0; s_len];
    for c in chunks {
        pf.per_datum_logp_mean.extend(c.mean);
        pf.per_datum_logp_var.extend(c.var);
        pf.per_datum_pred_logp.extend(c.pred);
        for s in 0..s_len {
            nln[s] -= c.sum_l[s];
            sq_dev[s] += c.sq_dev[s];
            pred_ratio[s] += c.pred_ratio[s];
        }
    }
    pf.e_nln = stats::mean(&nln);
    pf.v_nln = stats::variance(&nln);
    pf.series = Some(DrawSeries { segments: chain.segments().to_vec(), nln, sq_dev, pred_ratio });
    Ok(pf)
}

/// `T_n(b) = -(1/n) sum_i log E_w^b[p(X_i|w)]`.
pub fn bayes_training_loss(pf: &PosteriorFunctionals) -> f64 {
    -stats::mean(&pf.per_datum_pred_logp)
}

/// `V_n(b) = sum_i V_w^b[log p(X_i|w)]`.
pub fn functional_variance(pf: &PosteriorFunctionals) -> f64 {
    compensated_sum(pf.per_datum_logp_var.iter().copied())
}

/// WAIC `T_n(b) + b V_n(b) / n`.
pub fn waic(pf: &PosteriorFunctionals) -> f64 {
    bayes_training_loss(pf) + pf.beta.value() * functional_variance(pf) / pf.n as f64
}

/// Gibbs training loss `T'_n(b) = -E_w^b[(1/n) sum_i log p(X_i|w)]`.
pub fn gibbs_training_loss(pf: &PosteriorFunctionals) -> f64 {
    -stats::mean(&pf.per_datum_logp_mean)
}

/// WBIC `E_w^{1/log n}[n L_n(w)]`; the functionals must sit exactly at
/// `1/log n`.
pub fn wbic(pf: &PosteriorFunctionals) -> Result<f64> {
    pf.require_wbic()?;
    Ok(pf.e_nln)
}

/// Imai estimator `(1/log n)^2 V_w^{1/log n}[n L_n(w)]` of the RLCT.
pub fn imai_lambda(pf: &PosteriorFunctionals) -> Result<f64> {
    pf.require_wbic()?;
    let b = pf.beta.value();
    Ok(b * b * pf.v_nln)
}

/// Plug-in singular fluctuation `(b/2) V_n(b)` for one dataset.
pub fn singular_fluctuation_hat(pf: &PosteriorFunctionals) -> f64 {
    0.5 * pf.beta.value() * functional_variance(pf)
}

/// WAIC at `b = 1` predicted from the `1/log n` posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkedWaic {
    /// Estimate of `n E[WAIC]`.
    pub raw: f64,
    /// `raw / n`, on the same scale as WAIC.
    pub per_datum: f64,
}

/// `WBIC - lambda_hat (log n - 1) + V_n(1/log n) / (2 log n)`.
pub fn linked_waic(pf_wbic: &PosteriorFunctionals) -> Result<LinkedWaic> {
    pf_wbic.require_wbic()?;
    if pf_wbic.n < 3 {
        return Err(Error::SampleTooSmall(pf_wbic.n));
    }
    let log_n = pf_wbic.log_n();
    let raw = wbic(pf_wbic)? - imai_lambda(pf_wbic)? * (log_n - 1.0) + functional_variance(pf_wbic) / (2.0 * log_n);
    Ok(LinkedWaic { raw, per_datum: raw / pf_wbic.n as f64 })
}

/// General-temperature form:
/// `WBIC - lambda_hat (log n - 1/b) + V_n(1/log n)/(2 log n) + (b/2) V_n(b) (1 - 1/b)`.
/// At `b = 1` this coincides with [`linked_waic`].
pub fn linked_waic_general_beta(pf_wbic: &PosteriorFunctionals, pf_beta: &PosteriorFunctionals) -> Result<LinkedWaic> {
    pf_wbic.require_wbic()?;
    if pf_beta.n != pf_wbic.n {
        return Err(Error::DimensionMismatch { expected: pf_wbic.n, got: pf_beta.n });
    }
    if pf_wbic.n < 3 {
        return Err(Error::SampleTooSmall(pf_wbic.n));
    }
    let b = pf_beta.beta.value();
    let log_n = pf_wbic.log_n();
    let raw = wbic(pf_wbic)? - imai_lambda(pf_wbic)? * (log_n - 1.0 / b)
        + functional_variance(pf_wbic) / (2.0 * log_n)
        + 0.5 * b * functional_variance(pf_beta) * (1.0 - 1.0 / b);
    Ok(LinkedWaic { raw, per_datum: raw / pf_wbic.n as f64 })
}

/// Estimate of `L_n(w0)`: `WBIC / n - lambda_hat log n / n`.
pub fn optimum_loss_estimate(pf_wbic: &PosteriorFunctionals) -> Result<f64> {
    let n = pf_wbic.n as f64;
    Ok(wbic(pf_wbic)? / n - imai_lambda(pf_wbic)? * n.ln() / n)
}

/// Residuals of the two equations of state:
/// `r1 = (G - T) - 2b (T' - T)` and `r2 = (G' - T') - 2b (T' - T)`.
pub fn equation_of_state_residuals(g: f64, t: f64, gp: f64, tp: f64, beta: f64) -> (f64, f64) {
    let gap = 2.0 * beta * (tp - t);
    ((g - t) - gap, (gp - tp) - gap)
}

/// Monte Carlo Bayes and Gibbs generalization losses from fresh test draws:
/// `G = -mean_j log E_w[p(x_j|w)]` and `G' = -E_w[mean_j log p(x_j|w)]`.
pub fn generalization_losses_mc(model: &dyn ModelSpec, chain: &Chain, test_draws: &Dataset) -> Result<(f64, f64)> {
    let pf = functionals(model, test_draws, chain)?;
    Ok((bayes_training_loss(&pf), gibbs_training_loss(&pf)))
}

/// Gibbs generalization loss `G'_n(b) = E_w^b[L(w)]` with `L` estimated on
/// fresh test draws.
pub fn gibbs_generalization_loss(model: &dyn ModelSpec, chain: &Chain, test_draws: &Dataset) -> Result<f64> {
    Ok(generalization_losses_mc(model, chain, test_draws)?.1)
}
