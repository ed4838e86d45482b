//! Markov chains targeting the tempered posterior
//! `phi*_beta(w) ∝ prod_i p(X_i|w)^beta phi(w)` restricted to the parameter box.
//!
//! The normalising constant is never computed; every downstream estimator is
//! a ratio or a posterior expectation.

pub mod diagnostics;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, InverseTemperature, ModelSpec};
use crate::seed::derive_stream;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    RandomWalkMetropolis,
    Mala,
}

impl Algorithm {
    /// Acceptance rate targeted by burn-in step-size adaptation.
    pub fn target_acceptance(self) -> f64 {
        match self {
            Algorithm::RandomWalkMetropolis => 0.234,
            Algorithm::Mala => 0.574,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    /// Total iterations, burn-in included.
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub adapt: bool,
    /// Starting point; defaults to a uniform draw from the central half of the box.
    pub init: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::RandomWalkMetropolis,
            step_size: 0.1,
            n_steps: 6000,
            burn_in: 1000,
            thin: 1,
            n_chains: 1,
            seed: 0,
            adapt: true,
            init: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidSamplerConfig("step_size must be >= 0".into()));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidSamplerConfig("burn_in must be < n_steps".into()));
        }
        if self.thin == 0 || self.n_chains == 0 {
            return Err(Error::InvalidSamplerConfig("thin and n_chains must be >= 1".into()));
        }
        Ok(())
    }
}

/// Retained draws from one or more chains at a single inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    beta: InverseTemperature,
    dim: usize,
    draws: Vec<f64>,
    log_unnorm_posterior: Vec<f64>,
    acceptance_rate: f64,
    ess: Vec<f64>,
    seeds: Vec<u64>,
    step_size: f64,
    segments: Vec<usize>,
}

impl Chain {
    /// Wraps externally produced draws, e.g. a point posterior or draws from
    /// another sampler. The log-posterior column is recomputed.
    pub fn from_draws(
        model: &dyn ModelSpec,
        data: &Dataset,
        beta: InverseTemperature,
        draws: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = model.parameter_dim();
        if draws.is_empty() {
            return Err(Error::NotEnoughDraws { needed: 1, have: 0 });
        }
        let mut flat = Vec::with_capacity(draws.len() * dim);
        for w in &draws {
            model.check_parameter(w)?;
            flat.extend_from_slice(w);
        }
        let log_unnorm_posterior = draws.iter().map(|w| log_target(model, data, beta.value(), w)).collect();
        let mut chain = Self {
            beta,
            dim,
            draws: flat,
            log_unnorm_posterior,
            acceptance_rate: f64::NAN,
            ess: Vec::new(),
            seeds: Vec::new(),
            step_size: f64::NAN,
            segments: vec![draws.len()],
        };
        chain.ess = chain.coordinate_ess();
        Ok(chain)
    }

    /// Concatenates chains drawn at the same temperature.
    pub fn pooled(chains: &[Chain]) -> Result<Self> {
        let first = chains.first().ok_or(Error::NotEnoughDraws { needed: 1, have: 0 })?;
        if chains.iter().any(|c| c.beta != first.beta || c.dim != first.dim) {
            return Err(Error::InvalidSamplerConfig("pooled chains must share beta and dimension".into()));
        }
        let total: usize = chains.iter().map(Chain::len).sum();
        let mut pooled = Self {
            beta: first.beta,
            dim: first.dim,
            draws: chains.iter().flat_map(|c| c.draws.iter().copied()).collect(),
            log_unnorm_posterior: chains.iter().flat_map(|c| c.log_unnorm_posterior.iter().copied()).collect(),
            acceptance_rate: chains.iter().map(|c| c.acceptance_rate * c.len() as f64).sum::<f64>() / total as f64,
            ess: Vec::new(),
            seeds: chains.iter().flat_map(|c| c.seeds.iter().copied()).collect(),
            step_size: first.step_size,
            segments: chains.iter().flat_map(|c| c.segments.iter().copied()).collect(),
        };
        pooled.ess = pooled.coordinate_ess();
        Ok(pooled)
    }

    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_unnorm_posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn draw(&self, s: usize) -> &[f64] {
        &self.draws[s * self.dim..(s + 1) * self.dim]
    }

    pub fn draws(&self) -> std::slice::ChunksExact<'_, f64> {
        self.draws.chunks_exact(self.dim)
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.draws().map(|w| w[j]).collect()
    }

    /// `beta * sum_i log p(X_i|w) + log phi(w)` per draw.
    pub fn log_unnorm_posterior(&self) -> &[f64] {
        &self.log_unnorm_posterior
    }

    /// Fraction of accepted proposals after burn-in.
    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    /// Effective sample size per coordinate.
    pub fn ess(&self) -> &[f64] {
        &self.ess
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Step size in force after burn-in.
    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Lengths of the independent chains making up this one.
    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    /// Largest relative discrepancy between the stored log-posterior column
    /// and a fresh evaluation from the draws.
    pub fn max_log_posterior_error(&self, model: &dyn ModelSpec, data: &Dataset) -> f64 {
        self.draws()
            .zip(&self.log_unnorm_posterior)
            .map(|(w, &stored)| {
                let fresh = log_target(model, data, self.beta.value(), w);
                (fresh - stored).abs() / stored.abs().max(1e-300)
            })
            .fold(0.0, f64::max)
    }

    /// One row per draw: coordinates, then the log-posterior.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("w{j}")).collect();
        header.push("log_unnorm_posterior".into());
        wtr.write_record(&header)?;
        for (w, lp) in self.draws().zip(&self.log_unnorm_posterior) {
            let mut row: Vec<String> = w.iter().map(f64::to_string).collect();
            row.push(lp.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    fn coordinate_ess(&self) -> Vec<f64> {
        (0..self.dim).map(|j| diagnostics::ess_segments(&self.coordinate(j), &self.segments)).collect()
    }
}

fn log_target(model: &dyn ModelSpec, data: &Dataset, beta: f64, w: &[f64]) -> f64 {
    beta * model.log_likelihood(data, w) + model.log_prior(w)
}

struct State {
    w: Vec<f64>,
    log_lik: f64,
    log_prior: f64,
    grad: Vec<f64>,
}

impl State {
    fn new(model: &dyn ModelSpec, data: &Dataset, beta: f64, w: Vec<f64>, mala: bool) -> Result<Self> {
        let log_lik = model.log_likelihood(data, &w);
        let log_prior = model.log_prior(&w);
        let mut grad = Vec::new();
        if mala {
            grad = vec![0.0; w.len()];
            target_gradient(model, data, beta, &w, &mut grad)?;
        }
        Ok(Self { w, log_lik, log_prior, grad })
    }

    fn log_target(&self, beta: f64) -> f64 {
        beta * self.log_lik + self.log_prior
    }
}

fn target_gradient(model: &dyn ModelSpec, data: &Dataset, beta: f64, w: &[f64], out: &mut [f64]) -> Result<()> {
    model.log_likelihood_gradient(data, w, out)?;
    let mut gp = vec![0.0; w.len()];
    model.log_prior_gradient(w, &mut gp);
    out.iter_mut().zip(&gp).for_each(|(o, g)| *o = beta * *o + g);
    Ok(())
}

/// `log q(to | from)` for the MALA proposal, dropping shared constants.
fn mala_log_proposal(to: &[f64], from: &State, eps: f64) -> f64 {
    let half = 0.5 * eps * eps;
    let sq: f64 = to
        .iter()
        .zip(&from.w)
        .zip(&from.grad)
        .map(|((t, f), g)| {
            let r = t - f - half * g;
            r * r
        })
        .sum();
    -sq / (2.0 * eps * eps)
}

/// Runs the first chain of `cfg` (seeded by stream 0 of `cfg.seed`).
pub fn run_chain(
    model: &dyn ModelSpec,
    data: &Dataset,
    beta: InverseTemperature,
    cfg: &SamplerConfig,
) -> Result<Chain> {
    cfg.validate()?;
    run_single(model, data, beta, cfg, derive_stream(cfg.seed, 0))
}

/// Runs `cfg.n_chains` independent chains concurrently; chain `k` uses seed
/// stream `k`.
pub fn run_chains(
    model: &dyn ModelSpec,
    data: &Dataset,
    beta: InverseTemperature,
    cfg: &SamplerConfig,
) -> Result<Vec<Chain>> {
    cfg.validate()?;
    (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| run_single(model, data, beta, cfg, derive_stream(cfg.seed, k as u64)))
        .collect()
}

fn run_single(
    model: &dyn ModelSpec,
    data: &Dataset,
    beta: InverseTemperature,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<Chain> {
    let d = model.parameter_dim();
    if data.dim() != model.observation_dim() {
        return Err(Error::DimensionMismatch { expected: model.observation_dim(), got: data.dim() });
    }
    let mala = cfg.algorithm == Algorithm::Mala;
    if mala && !model.has_gradient() {
        return Err(Error::GradientUnavailable(model.name().to_string()));
    }
    let b = beta.value();
    let bounds = model.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let init = match &cfg.init {
        Some(w) => {
            model.check_parameter(w)?;
            w.clone()
        }
        None => bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(l, u)| l + (u - l) * (0.25 + 0.5 * rng.random::<f64>()))
            .collect(),
    };
    let mut current = State::new(model, data, b, init, mala)?;
    if !current.log_target(b).is_finite() {
        return Err(Error::NonFiniteInitialTarget(current.w));
    }

    let target_rate = cfg.algorithm.target_acceptance();
    let mut log_eps = cfg.step_size.ln();
    let frozen_zero = cfg.step_size == 0.0;
    let kept = (cfg.n_steps - cfg.burn_in).div_ceil(cfg.thin);
    let mut draws = Vec::with_capacity(kept * d);
    let mut log_post = Vec::with_capacity(kept);
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; d];

    for t in 0..cfg.n_steps {
        let eps = if frozen_zero { 0.0 } else { log_eps.exp() };
        for (j, p) in proposal.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let drift = if mala { 0.5 * eps * eps * current.grad[j] } else { 0.0 };
            *p = current.w[j] + drift + eps * z;
        }
        let u: f64 = rng.random();

        let mut next = None;
        if bounds.contains(&proposal) {
            let cand = State::new(model, data, b, proposal.clone(), mala && eps > 0.0)?;
            let cand_target = cand.log_target(b);
            if cand_target.is_nan() {
                return Err(Error::NonFiniteDraw { index: t });
            }
            let mut delta = cand_target - current.log_target(b);
            if mala && eps > 0.0 {
                delta += mala_log_proposal(&current.w, &cand, eps) - mala_log_proposal(&cand.w, &current, eps);
            }
            if eps == 0.0 {
                delta = 0.0;
            }
            if delta >= 0.0 || u.ln() < delta {
                next = Some(cand);
            }
        }
        let moved = next.is_some();
        if let Some(mut s) = next {
            if mala && eps == 0.0 {
                s.grad = current.grad.clone();
            }
            current = s;
        }

        if t < cfg.burn_in {
            // Adapting on the accept indicator rather than min(1, e^delta)
            // keeps the chain a function of discrete decisions, so additive
            // constants in the log target cannot perturb it through rounding.
            if cfg.adapt && !frozen_zero {
                let gain = ((t + 1) as f64).powf(-0.6);
                log_eps += gain * (moved as u8 as f64 - target_rate);
            }
        } else {
            accepted += moved as usize;
            if (t - cfg.burn_in).is_multiple_of(cfg.thin) {
                draws.extend_from_slice(&current.w);
                log_post.push(current.log_target(b));
            }
        }
    }

    let n_kept = log_post.len();
    let mut chain = Chain {
        beta,
        dim: d,
        draws,
        log_unnorm_posterior: log_post,
        acceptance_rate: accepted as f64 / (cfg.n_steps - cfg.burn_in) as f64,
        ess: Vec::new(),
        seeds: vec![seed],
        step_size: if frozen_zero { 0.0 } else { log_eps.exp() },
        segments: vec![n_kept],
    };
    chain.ess = chain.coordinate_ess();
    Ok(chain)
}

/// Posterior mean of a per-draw functional with its Monte Carlo standard
/// error `sd(f) / sqrt(ESS_f)`. A single draw reports an infinite SE.
pub fn posterior_expectation<F>(chain: &Chain, f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let values = evaluate(chain, f)?;
    Ok((stats::mean(&values), diagnostics::mc_se(&values, chain.segments())))
}

/// Unbiased posterior variance of a per-draw functional.
pub fn posterior_variance<F>(chain: &Chain, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if chain.len() < 2 {
        return Err(Error::NotEnoughDraws { needed: 2, have: chain.len() });
    }
    Ok(stats::variance(&evaluate(chain, f)?))
}

fn evaluate<F: Fn(&[f64]) -> f64>(chain: &Chain, f: F) -> Result<Vec<f64>> {
    if chain.is_empty() {
        return Err(Error::NotEnoughDraws { needed: 1, have: 0 });
    }
    chain
        .draws()
        .enumerate()
        .map(|(index, w)| {
            let v = f(w);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteDraw { index })
            }
        })
        .collect()
}

/// Split-R-hat per coordinate across equal-length chains.
pub fn rhat(chains: &[Chain]) -> Result<Vec<f64>> {
    if chains.len() < 2 {
        return Err(Error::NotEnoughDraws { needed: 2, have: chains.len() });
    }
    let dim = chains[0].dim();
    if chains.iter().any(|c| c.len() != chains[0].len()) {
        return Err(Error::UnequalChains);
    }
    (0..dim)
        .map(|j| {
            let coords: Vec<Vec<f64>> = chains.iter().map(|c| c.coordinate(j)).collect();
            let refs: Vec<&[f64]> = coords.iter().map(Vec::as_slice).collect();
            diagnostics::split_rhat(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_truth;
    use crate::models::{ConjugateNormalMeanModel, GaussianMixtureModel};

    fn setup() -> (ConjugateNormalMeanModel, Dataset) {
        let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3]).unwrap();
        let data = sample_truth(&m, 100, 17).unwrap();
        (m, data)
    }

    #[test]
    fn zero_step_freezes_the_chain() {
        let (m, data) = setup();
        for algorithm in [Algorithm::RandomWalkMetropolis, Algorithm::Mala] {
            let cfg = SamplerConfig {
                algorithm,
                step_size: 0.0,
                n_steps: 200,
                burn_in: 50,
                init: Some(vec![1.5]),
                ..Default::default()
            };
            let chain = run_chain(&m, &data, InverseTemperature::new(1.0).unwrap(), &cfg).unwrap();
            assert!(chain.draws().all(|w| w == [1.5]));
            assert_eq!(chain.acceptance_rate(), 1.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (m, data) = setup();
        let cfg = SamplerConfig { seed: 99, n_steps: 2000, ..Default::default() };
        let beta = InverseTemperature::new(0.5).unwrap();
        let a = run_chain(&m, &data, beta, &cfg).unwrap();
        let b = run_chain(&m, &data, beta, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&m, &data, beta, &SamplerConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn stored_log_posterior_is_reproducible() {
        let (m, data) = setup();
        let chain = run_chain(&m, &data, InverseTemperature::new(1.0).unwrap(), &SamplerConfig::default()).unwrap();
        assert!(chain.max_log_posterior_error(&m, &data) <= 1e-10);
    }

    #[test]
    fn draws_stay_in_the_box() {
        let m = GaussianMixtureModel::new(3.0).unwrap();
        let data = sample_truth(&m, 50, 3).unwrap();
        let cfg = SamplerConfig { step_size: 2.0, adapt: false, n_steps: 3000, ..Default::default() };
        let chain = run_chain(&m, &data, InverseTemperature::new(1.0).unwrap(), &cfg).unwrap();
        assert!(chain.draws().all(|w| m.bounds().contains(w)));
        assert!(chain.acceptance_rate() < 1.0);
    }

    #[test]
    fn mala_requires_gradients() {
        struct NoGrad(ConjugateNormalMeanModel);
        impl ModelSpec for NoGrad {
            fn name(&self) -> &str {
                "no_grad"
            }
            fn parameter_dim(&self) -> usize {
                1
            }
            fn observation_dim(&self) -> usize {
                1
            }
            fn bounds(&self) -> &crate::model::Bounds {
                self.0.bounds()
            }
            fn log_density(&self, x: &[f64], w: &[f64]) -> f64 {
                self.0.log_density(x, w)
            }
            fn log_prior(&self, w: &[f64]) -> f64 {
                self.0.log_prior(w)
            }
        }
        let (m, data) = setup();
        let cfg = SamplerConfig { algorithm: Algorithm::Mala, ..Default::default() };
        let err = run_chain(&NoGrad(m), &data, InverseTemperature::new(1.0).unwrap(), &cfg);
        assert!(matches!(err, Err(Error::GradientUnavailable(_))));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SamplerConfig { burn_in: 10, n_steps: 10, ..Default::default() },
            SamplerConfig { thin: 0, ..Default::default() },
            SamplerConfig { step_size: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn constant_functional_and_single_draw() {
        let (m, data) = setup();
        let beta = InverseTemperature::new(1.0).unwrap();
        let chain = run_chain(&m, &data, beta, &SamplerConfig::default()).unwrap();
        assert_eq!(posterior_expectation(&chain, |_| 4.0).unwrap(), (4.0, 0.0));
        assert_eq!(posterior_variance(&chain, |_| 4.0).unwrap(), 0.0);

        let single = Chain::from_draws(&m, &data, beta, vec![vec![0.2]]).unwrap();
        let (est, se) = posterior_expectation(&single, |w| w[0]).unwrap();
        assert_eq!(est, 0.2);
        assert!(se.is_infinite());
        assert!(posterior_variance(&single, |w| w[0]).is_err());
        assert!(matches!(posterior_expectation(&chain, |_| f64::NAN), Err(Error::NonFiniteDraw { index: 0 })));
    }

    #[test]
    fn two_point_variance() {
        let (m, data) = setup();
        let beta = InverseTemperature::new(1.0).unwrap();
        let chain = Chain::from_draws(&m, &data, beta, vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(posterior_variance(&chain, |w| w[0]).unwrap(), 2.0);
    }

    #[test]
    fn chain_csv_dump() {
        let (m, data) = setup();
        let beta = InverseTemperature::new(1.0).unwrap();
        let chain = Chain::from_draws(&m, &data, beta, vec![vec![0.0], vec![2.0]]).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("w1,log_unnorm_posterior\n0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
