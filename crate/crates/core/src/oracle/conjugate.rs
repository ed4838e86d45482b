//! Closed-form tempered posterior quantities for [`ConjugateNormalMeanModel`].
//!
//! # Derivations
//!
//! With `p(x|w) = N(x; w, s2 I_d)` (`s2 = sigma^2`) and prior `N(m0, t2 I_d)`,
//! the tempered posterior at inverse temperature `b` is Gaussian,
//! `w ~ N(m, v I_d)` with
//!
//! ```text
//! 1/v = n b / s2 + 1 / t2
//! m   = v (b sum_i X_i / s2 + m0 / t2)
//! ```
//!
//! Write `u = w - m ~ N(0, v I_d)` and `r_i = X_i - m`. Then
//! `||X_i - w||^2 = ||r_i||^2 - 2 r_i.u + ||u||^2`. Odd moments of `u`
//! vanish and `Var ||u||^2 = 2 d v^2`, `Var(r.u) = v ||r||^2`, so
//!
//! ```text
//! E ||X_i - w||^2   = ||r_i||^2 + d v
//! Var ||X_i - w||^2 = 4 v ||r_i||^2 + 2 d v^2
//! ```
//!
//! and with `log p(X_i|w) = c - ||X_i - w||^2 / (2 s2)`,
//! `c = -(d/2) log(2 pi s2)`:
//!
//! ```text
//! E[log p(X_i|w)] = c - (||r_i||^2 + d v) / (2 s2)
//! V[log p(X_i|w)] = (4 v ||r_i||^2 + 2 d v^2) / (4 s2^2)
//! ```
//!
//! For `n L_n(w) = -n c + (S + n ||xbar - w||^2) / (2 s2)` with
//! `S = sum_i ||X_i - xbar||^2` the same identities with `r = xbar - m` give
//!
//! ```text
//! E[n L_n] = -n c + (S + n (||xbar - m||^2 + d v)) / (2 s2)
//! V[n L_n] = n^2 (4 v ||xbar - m||^2 + 2 d v^2) / (4 s2^2)
//! ```
//!
//! The predictive density is the Gaussian convolution
//! `E_w[p(x|w)] = N(x; m, (s2 + v) I_d)`. Against the truth
//! `q = N(mu0, s2 I_d)` the cross-entropies are
//!
//! ```text
//! G_n  = (d/2) log(2 pi (s2 + v)) + (d s2 + ||mu0 - m||^2) / (2 (s2 + v))
//! G'_n = (d/2) log(2 pi s2) + (d s2 + ||mu0 - m||^2 + d v) / (2 s2)
//! ```
//!
//! The prior is truncated to the box; these formulas ignore the truncation,
//! so every entry point checks that the posterior mass outside the box is
//! below `1e-12`.
//!
//! [`ConjugateNormalMeanModel`]: crate::models::ConjugateNormalMeanModel

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::criteria::{ChainProvenance, CriteriaReport, PosteriorFunctionals};
use crate::error::{Error, Result};
use crate::model::{Dataset, InverseTemperature};
use crate::models::{ConjugateNormalMeanModel, LN_2PI};
use crate::stats::compensated_sum;

const MAX_TRUNCATION_MASS: f64 = 1e-12;

/// WBIC-temperature terms computed alongside the main result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WbicComponents {
    pub f_hat: f64,
    pub lambda_hat: f64,
    pub vn_at_wbic_temp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugateOracleResult {
    pub beta: f64,
    pub posterior_mean: Vec<f64>,
    /// Per-coordinate variance (the posterior is isotropic).
    pub posterior_variance: f64,
    pub e_nln: f64,
    pub v_nln: f64,
    pub per_datum_logp_mean: Vec<f64>,
    pub per_datum_logp_var: Vec<f64>,
    pub predictive_logp: Vec<f64>,
    pub bayes_gen_loss: f64,
    pub bayes_train_loss: f64,
    pub gibbs_gen_loss: f64,
    pub gibbs_train_loss: f64,
    pub functional_variance: f64,
    pub waic: f64,
    pub wbic_component_terms: WbicComponents,
}

impl ConjugateOracleResult {
    /// Exact posterior functionals, ready for the criteria module.
    pub fn functionals(&self) -> PosteriorFunctionals {
        PosteriorFunctionals::exact(
            InverseTemperature::new(self.beta).expect("validated on construction"),
            self.per_datum_logp_mean.clone(),
            self.per_datum_logp_var.clone(),
            self.predictive_logp.clone(),
            self.e_nln,
            self.v_nln,
        )
    }
}

/// Posterior mean and per-coordinate variance at inverse temperature `beta`.
pub fn conjugate_posterior(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: InverseTemperature,
) -> Result<(Vec<f64>, f64)> {
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: data.dim() });
    }
    let n = data.len() as f64;
    let b = beta.value();
    let s2 = model.sigma() * model.sigma();
    let t2 = model.tau() * model.tau();
    let var = 1.0 / (n * b / s2 + 1.0 / t2);
    let mean =
        data.mean().iter().zip(model.prior_mean()).map(|(xbar, m0)| var * (b * n * xbar / s2 + m0 / t2)).collect();
    Ok((mean, var))
}

/// Mass of the untruncated posterior outside the parameter box.
pub fn truncation_mass(model: &ConjugateNormalMeanModel, mean: &[f64], var: f64) -> f64 {
    let sd = var.sqrt();
    let bound = model.bound();
    let tail = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    mean.iter().map(|m| tail((bound - m) / sd) + tail((bound + m) / sd)).sum()
}

fn checked_posterior(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: InverseTemperature,
) -> Result<(Vec<f64>, f64)> {
    let (mean, var) = conjugate_posterior(model, data, beta)?;
    let mass = truncation_mass(model, &mean, var);
    if mass >= MAX_TRUNCATION_MASS {
        return Err(Error::TruncationMass { mass });
    }
    Ok((mean, var))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log E_w^b[p(x|w)] = log N(x; m, (s2 + v) I)`.
pub fn conjugate_predictive_log_density(model: &ConjugateNormalMeanModel, mean: &[f64], var: f64, x: &[f64]) -> f64 {
    let pv = model.sigma() * model.sigma() + var;
    -0.5 * model.dim() as f64 * (LN_2PI + pv.ln()) - sq_dist(x, mean) / (2.0 * pv)
}

fn moments_nln(model: &ConjugateNormalMeanModel, data: &Dataset, mean: &[f64], var: f64) -> (f64, f64) {
    let n = data.len() as f64;
    let d = model.dim() as f64;
    let s2 = model.sigma() * model.sigma();
    let c = -0.5 * d * (LN_2PI + s2.ln());
    let shift = sq_dist(data.mean(), mean);
    let e = -n * c + (data.centered_sum_sq() + n * (shift + d * var)) / (2.0 * s2);
    let v = n * n * (4.0 * var * shift + 2.0 * d * var * var) / (4.0 * s2 * s2);
    (e, v)
}

/// Exact `G_n(b)`: cross-entropy of the truth against the predictive.
pub fn conjugate_bayes_gen_loss(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: InverseTemperature,
) -> Result<f64> {
    let (mean, var) = checked_posterior(model, data, beta)?;
    Ok(bayes_gen_from(model, &mean, var))
}

fn bayes_gen_from(model: &ConjugateNormalMeanModel, mean: &[f64], var: f64) -> f64 {
    let d = model.dim() as f64;
    let s2 = model.sigma() * model.sigma();
    let pv = s2 + var;
    0.5 * d * (LN_2PI + pv.ln()) + (d * s2 + sq_dist(model.mu0(), mean)) / (2.0 * pv)
}

/// Exact `G'_n(b) = E_w^b[L(w)]`.
pub fn conjugate_gibbs_gen_loss(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: InverseTemperature,
) -> Result<f64> {
    let (mean, var) = checked_posterior(model, data, beta)?;
    Ok(gibbs_gen_from(model, &mean, var))
}

fn gibbs_gen_from(model: &ConjugateNormalMeanModel, mean: &[f64], var: f64) -> f64 {
    let d = model.dim() as f64;
    let s2 = model.sigma() * model.sigma();
    0.5 * d * (LN_2PI + s2.ln()) + (d * s2 + sq_dist(model.mu0(), mean) + d * var) / (2.0 * s2)
}

/// Every closed-form quantity at inverse temperature `beta`, plus the WBIC
/// terms at `1/log n`.
pub fn conjugate_exact(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: InverseTemperature,
) -> Result<ConjugateOracleResult> {
    let (mean, var) = checked_posterior(model, data, beta)?;
    let d = model.dim() as f64;
    let s2 = model.sigma() * model.sigma();
    let c = -0.5 * d * (LN_2PI + s2.ln());

    let mut per_datum_logp_mean = Vec::with_capacity(data.len());
    let mut per_datum_logp_var = Vec::with_capacity(data.len());
    let mut predictive_logp = Vec::with_capacity(data.len());
    for x in data.rows() {
        let r2 = sq_dist(x, &mean);
        per_datum_logp_mean.push(c - (r2 + d * var) / (2.0 * s2));
        per_datum_logp_var.push((4.0 * var * r2 + 2.0 * d * var * var) / (4.0 * s2 * s2));
        predictive_logp.push(conjugate_predictive_log_density(model, &mean, var, x));
    }
    let (e_nln, v_nln) = moments_nln(model, data, &mean, var);
    let n = data.len() as f64;
    let functional_variance = compensated_sum(per_datum_logp_var.iter().copied());
    let bayes_train_loss = -compensated_sum(predictive_logp.iter().copied()) / n;
    let gibbs_train_loss = -compensated_sum(per_datum_logp_mean.iter().copied()) / n;
    let waic = bayes_train_loss + beta.value() * functional_variance / n;

    let wbic_beta = InverseTemperature::wbic(data.len())?;
    let (wm, wv) = checked_posterior(model, data, wbic_beta)?;
    let (f_hat, v_wbic) = moments_nln(model, data, &wm, wv);
    let vn_at_wbic_temp =
        compensated_sum(data.rows().map(|x| (4.0 * wv * sq_dist(x, &wm) + 2.0 * d * wv * wv) / (4.0 * s2 * s2)));

    Ok(ConjugateOracleResult {
        beta: beta.value(),
        bayes_gen_loss: bayes_gen_from(model, &mean, var),
        gibbs_gen_loss: gibbs_gen_from(model, &mean, var),
        posterior_mean: mean,
        posterior_variance: var,
        e_nln,
        v_nln,
        per_datum_logp_mean,
        per_datum_logp_var,
        predictive_logp,
        bayes_train_loss,
        gibbs_train_loss,
        functional_variance,
        waic,
        wbic_component_terms: WbicComponents { f_hat, lambda_hat: wbic_beta.value().powi(2) * v_wbic, vn_at_wbic_temp },
    })
}

/// The exact counterpart of an MCMC [`CriteriaReport`].
pub fn conjugate_report(
    model: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta_main: Option<InverseTemperature>,
) -> Result<CriteriaReport> {
    let wbic_beta = InverseTemperature::wbic(data.len())?;
    let pf_wbic = conjugate_exact(model, data, wbic_beta)?.functionals();
    let pf_main = beta_main.map(|b| conjugate_exact(model, data, b)).transpose()?.map(|r| r.functionals());
    CriteriaReport::from_functionals(&pf_wbic, pf_main.as_ref(), ChainProvenance::default())
}
