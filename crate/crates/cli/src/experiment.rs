use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::Serialize;
use sltcrit::criteria::generalization_losses_mc;
use sltcrit::model::{empirical_loss, sample_truth};
use sltcrit::oracle::{conjugate_exact, conjugate_report};
use sltcrit::seed::{derive_seed, derive_stream};
use sltcrit::{
    functionals, run_chains, Chain, ChainProvenance, ConjugateNormalMeanModel, CriteriaReport, Dataset,
    InverseTemperature, ModelSpec, PosteriorFunctionals,
};

use crate::aggregate::{aggregate, AggregateReport};
use crate::config::{BuiltModel, Engine, ExperimentConfig, Mode};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// One MCMC report field set against its exact counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldComparison {
    pub field: &'static str,
    pub estimate: f64,
    pub exact: f64,
    pub mc_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub fields: Vec<FieldComparison>,
    /// Largest `|estimate - exact| / mc_se` over the fields.
    pub max_z: f64,
    pub pass: bool,
}

/// The criteria for one (n, beta, replication) plus the loss quantities
/// the checks need.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub beta: f64,
    pub replication: usize,
    pub data_seed: u64,
    pub report: CriteriaReport,
    /// `G_n(beta)`, exact for the conjugate model or from a fresh test set.
    pub bayes_gen_loss: Option<f64>,
    /// `G'_n(beta)`.
    pub gibbs_gen_loss: Option<f64>,
    /// `L_n(w0)` when the truth is known.
    pub train_loss_at_w0: Option<f64>,
    pub oracle: Option<OracleComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedReplication {
    pub n: usize,
    pub replication: usize,
    pub data_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub records: Vec<ReplicationRecord>,
    pub failed: Vec<FailedReplication>,
    pub aggregate: AggregateReport,
}

impl ExperimentOutput {
    /// The mode's verdict: `None` for modes without a pass criterion.
    pub fn passed(&self) -> Option<bool> {
        self.aggregate.passed
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    built: &'a BuiltModel,
    data: Option<&'a Dataset>,
    digest: String,
}

/// Runs every replication of the configured grid and aggregates the
/// results. Output depends only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let built = cfg.build_model()?;
    let data = cfg.load_data(built.model.as_ref())?;
    let ctx = Context { cfg, built: &built, data: data.as_ref(), digest: cfg.digest() };

    let tasks: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.replications).map(move |r| (n, r))).collect();
    let outcomes: Vec<(usize, usize, u64, Result<Vec<ReplicationRecord>>)> = tasks
        .par_iter()
        .map(|&(n, r)| {
            let seed = derive_seed(cfg.master_seed, n as u64, r as u64);
            (n, r, seed, run_replication(&ctx, n, r, seed))
        })
        .collect();

    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (n, replication, data_seed, outcome) in outcomes {
        match outcome {
            Ok(rs) => records.extend(rs),
            Err(e) => failed.push(FailedReplication { n, replication, data_seed, error: format!("{e:#}") }),
        }
    }
    let fraction = failed.len() as f64 / tasks.len() as f64;
    if fraction > MAX_FAILURE_FRACTION {
        let first = failed.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(anyhow!(
            "{} of {} replications failed (limit {:.0}%); first error: {first}",
            failed.len(),
            tasks.len(),
            100.0 * MAX_FAILURE_FRACTION
        ));
    }
    let seeds = tasks.iter().map(|&(n, r)| (n, r, derive_seed(cfg.master_seed, n as u64, r as u64))).collect();
    let aggregate = aggregate(cfg, &built, &records, &failed, seeds, ctx.digest.clone());
    Ok(ExperimentOutput { records, failed, aggregate })
}

/// Seed of chain `k` (0 is the `1/log n` chain) for one replication. The
/// sampler's own seed acts as a salt.
fn chain_seed(data_seed: u64, k: usize, salt: u64) -> u64 {
    derive_stream(derive_stream(data_seed, 1 + k as u64), salt)
}

fn test_seed(data_seed: u64) -> u64 {
    derive_stream(data_seed, u64::MAX)
}

fn sample_posterior(
    ctx: &Context,
    data: &Dataset,
    beta: InverseTemperature,
    seed: u64,
) -> Result<(Chain, PosteriorFunctionals)> {
    let model = ctx.built.model.as_ref();
    let mut scfg = ctx.cfg.sampler.clone();
    scfg.seed = seed;
    let chains = run_chains(model, data, beta, &scfg)?;
    let chain = if chains.len() == 1 { chains.into_iter().next().expect("one chain") } else { Chain::pooled(&chains)? };
    let pf = functionals(model, data, &chain)?;
    Ok((chain, pf))
}

fn run_replication(ctx: &Context, n: usize, r: usize, data_seed: u64) -> Result<Vec<ReplicationRecord>> {
    let cfg = ctx.cfg;
    let model = ctx.built.model.as_ref();
    let owned;
    let data = match ctx.data {
        Some(d) => d,
        None => {
            owned = sample_truth(model, n, data_seed)?;
            &owned
        }
    };
    let wbic_beta = InverseTemperature::wbic(n)?;
    let main_betas: Vec<Option<InverseTemperature>> = if cfg.betas.is_empty() {
        vec![None]
    } else {
        cfg.betas.iter().map(|b| InverseTemperature::new(*b).map(Some)).collect::<sltcrit::Result<_>>()?
    };
    let train_loss_at_w0 = match model.truth() {
        Some(t) if ctx.data.is_none() => Some(empirical_loss(model, data, &t.w0)?),
        _ => None,
    };

    let mut records = Vec::with_capacity(main_betas.len());
    match cfg.engine {
        Engine::Oracle => {
            let conj = ctx.built.conjugate.as_ref().expect("validated: oracle engine needs the conjugate model");
            for beta in main_betas {
                let mut report = conjugate_report(conj, data, beta)?;
                report.chain_provenance.config_digest = ctx.digest.clone();
                let exact = conjugate_exact(conj, data, beta.unwrap_or(wbic_beta))?;
                records.push(ReplicationRecord {
                    n,
                    beta: report.beta_main,
                    replication: r,
                    data_seed,
                    report,
                    bayes_gen_loss: Some(exact.bayes_gen_loss),
                    gibbs_gen_loss: Some(exact.gibbs_gen_loss),
                    train_loss_at_w0,
                    oracle: None,
                });
            }
        }
        Engine::Mcmc => {
            let salt = cfg.sampler.seed;
            let (chain_w, pf_w) = sample_posterior(ctx, data, wbic_beta, chain_seed(data_seed, 0, salt))?;
            let test = if cfg.test_set_size > 0 {
                Some(sample_truth(model, cfg.test_set_size, test_seed(data_seed))?)
            } else {
                None
            };
            for (k, beta) in main_betas.into_iter().enumerate() {
                let main = match beta {
                    Some(b) => Some(sample_posterior(ctx, data, b, chain_seed(data_seed, 1 + k, salt))?),
                    None => None,
                };
                let mut seeds = chain_w.seeds().to_vec();
                if let Some((c, _)) = &main {
                    seeds.extend_from_slice(c.seeds());
                }
                let provenance = ChainProvenance { seeds, config_digest: ctx.digest.clone() };
                let report = CriteriaReport::from_functionals(&pf_w, main.as_ref().map(|m| &m.1), provenance)?;
                let main_chain = main.as_ref().map(|m| &m.0).unwrap_or(&chain_w);
                let (bayes_gen_loss, gibbs_gen_loss) =
                    gen_losses(model, ctx.built.conjugate.as_ref(), data, main_chain, test.as_ref())?;
                let oracle = match (cfg.mode, &ctx.built.conjugate) {
                    (Mode::OracleCheck, Some(conj)) => Some(compare_with_oracle(conj, data, beta, &report)?),
                    _ => None,
                };
                records.push(ReplicationRecord {
                    n,
                    beta: report.beta_main,
                    replication: r,
                    data_seed,
                    report,
                    bayes_gen_loss,
                    gibbs_gen_loss,
                    train_loss_at_w0,
                    oracle,
                });
            }
        }
    }
    Ok(records)
}

/// Generalization losses for the chain's temperature: from a fresh test
/// set when one is configured, else exact for the conjugate model.
fn gen_losses(
    model: &dyn ModelSpec,
    conjugate: Option<&ConjugateNormalMeanModel>,
    data: &Dataset,
    chain: &Chain,
    test: Option<&Dataset>,
) -> Result<(Option<f64>, Option<f64>)> {
    if let Some(test) = test {
        let (g, gp) = generalization_losses_mc(model, chain, test)?;
        return Ok((Some(g), Some(gp)));
    }
    if let Some(conj) = conjugate {
        let exact = conjugate_exact(conj, data, chain.beta())?;
        return Ok((Some(exact.bayes_gen_loss), Some(exact.gibbs_gen_loss)));
    }
    Ok((None, None))
}

/// Every report field against the closed form, within 3 Monte Carlo SEs.
pub fn compare_with_oracle(
    conj: &ConjugateNormalMeanModel,
    data: &Dataset,
    beta: Option<InverseTemperature>,
    report: &CriteriaReport,
) -> Result<OracleComparison> {
    let exact = conjugate_report(conj, data, beta)?;
    let mut max_z: f64 = 0.0;
    let fields: Vec<FieldComparison> = report
        .fields()
        .into_iter()
        .zip(exact.fields())
        .map(|((field, estimate, mc_se), (_, exact, _))| {
            let diff = (estimate - exact).abs();
            // Exact agreement passes even when the SE is zero.
            let pass = diff <= 3.0 * mc_se || diff <= 1e-12 * exact.abs().max(1.0);
            if mc_se > 0.0 {
                max_z = max_z.max(diff / mc_se);
            } else if diff > 0.0 {
                max_z = f64::INFINITY;
            }
            FieldComparison { field, estimate, exact, mc_se, pass }
        })
        .collect();
    let pass = fields.iter().all(|f| f.pass);
    Ok(OracleComparison { fields, max_z, pass })
}

/// Jensen orderings and definitional recompositions that every record must
/// satisfy up to rounding. Returns a description of each violation.
pub fn invariant_violations(rec: &ReplicationRecord) -> Vec<String> {
    let r = &rec.report;
    let n = r.n as f64;
    let b = r.beta_main;
    let log_n = n.ln();
    let mut out = Vec::new();
    let mut same = |name: &str, got: f64, parts: &[f64]| {
        let want: f64 = parts.iter().sum();
        let scale = parts.iter().fold(got.abs(), |m, p| m.max(p.abs())).max(f64::MIN_POSITIVE);
        if (got - want).abs() > 1e-12 * scale {
            out.push(format!("{name}: {got} vs {want}"));
        }
    };
    same("waic = T_n + b V_n / n", r.waic, &[r.waic_tn, b * r.waic_vn / n]);
    same("nu_hat = b V_n / 2", r.nu_hat_at_beta, &[0.5 * b * r.waic_vn]);
    same("linked_waic_raw", r.linked_waic_raw, &[r.wbic, -r.lambda_hat * (log_n - 1.0), r.nu_hat_at_wbic_temp]);
    same("linked_waic = raw / n", r.linked_waic, &[r.linked_waic_raw / n]);
    same("optimum_loss_est", r.optimum_loss_est, &[r.wbic / n, -r.lambda_hat * log_n / n]);
    if (b - 1.0 / log_n).abs() <= 1e-15 {
        same("wbic = n T'_n", r.wbic, &[n * r.gibbs_train]);
    }
    let slack = 1e-12 * r.gibbs_train.abs().max(1.0);
    if r.waic_tn > r.gibbs_train + slack {
        out.push(format!("T_n {} > T'_n {}", r.waic_tn, r.gibbs_train));
    }
    for (name, v) in [("V_n", r.waic_vn), ("lambda_hat", r.lambda_hat), ("nu_hat", r.nu_hat_at_wbic_temp)] {
        if v < 0.0 {
            out.push(format!("{name} = {v} < 0"));
        }
    }
    if let (Some(g), Some(gp)) = (rec.bayes_gen_loss, rec.gibbs_gen_loss) {
        if g > gp + 1e-12 * gp.abs().max(1.0) {
            out.push(format!("G_n {g} > G'_n {gp}"));
        }
    }
    out
}
