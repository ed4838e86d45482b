use serde::Serialize;
use sltcrit::criteria::equation_of_state_residuals;
use sltcrit::stats::mean_se;

use crate::config::{BuiltModel, ExperimentConfig, Mode};
use crate::experiment::{FailedReplication, ReplicationRecord};

/// Every per-replication quantity the harness aggregates, in column order.
pub const VALUE_COLUMNS: &[&str] = &[
    "waic",
    "waic_Tn",
    "waic_Vn",
    "wbic",
    "lambda_hat",
    "nu_hat_at_wbic_temp",
    "nu_hat_at_beta",
    "linked_waic",
    "linked_waic_raw",
    "linked_waic_general",
    "gibbs_train",
    "optimum_loss_est",
    "bayes_gen_loss",
    "gibbs_gen_loss",
    "train_loss_at_w0",
    "waic_minus_gen",
    "eos_r1",
    "eos_r2",
    "linked_minus_waic",
    "optimum_loss_gap",
    "imai_bias",
    "main_residual",
    "oracle_max_z",
];

/// Inputs to the derived columns that come from the configuration.
#[derive(Debug, Clone, Copy)]
pub struct DerivedInputs {
    pub known_lambda: Option<f64>,
}

/// Values of [`VALUE_COLUMNS`] for one record; `None` where undefined.
pub fn record_values(rec: &ReplicationRecord, inputs: DerivedInputs) -> Vec<Option<f64>> {
    let r = &rec.report;
    let n = rec.n as f64;
    let at_one = rec.beta == 1.0;
    let eos = match (rec.bayes_gen_loss, rec.gibbs_gen_loss) {
        (Some(g), Some(gp)) => Some(equation_of_state_residuals(g, r.waic_tn, gp, r.gibbs_train, rec.beta)),
        _ => None,
    };
    let lambda = inputs.known_lambda;
    let mut v: Vec<Option<f64>> = r.fields().into_iter().map(|(_, x, _)| Some(x)).collect();
    v.extend([
        rec.bayes_gen_loss,
        rec.gibbs_gen_loss,
        rec.train_loss_at_w0,
        rec.bayes_gen_loss.map(|g| r.waic - g),
        eos.map(|e| e.0),
        eos.map(|e| e.1),
        at_one.then_some(r.linked_waic - r.waic),
        rec.train_loss_at_w0.map(|l| r.optimum_loss_est - l),
        lambda.map(|l| r.lambda_hat - l),
        lambda.filter(|_| at_one).map(|l| n * r.waic - (r.wbic - l * (n.ln() - 1.0) + r.nu_hat_at_wbic_temp)),
        rec.oracle.as_ref().map(|o| o.max_z),
    ]);
    debug_assert_eq!(v.len(), VALUE_COLUMNS.len());
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldStat {
    pub name: &'static str,
    pub mean: f64,
    /// Sample SD / sqrt(R); `None` with a single replication.
    pub se: Option<f64>,
}

/// `|value| <= tolerance`, with the tolerance already including any SE
/// multiple. An undefined SE counts as zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub se: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, stat: &FieldStat, base: f64, se_multiple: f64) -> Self {
        let tolerance = base + se_multiple * stat.se.unwrap_or(0.0);
        Self { name, value: stat.mean, se: stat.se, tolerance, pass: stat.mean.abs() <= tolerance }
    }
}

/// `|x(n_to)| <= |x(n_from)| + 3 * hypot(se_from, se_to)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub name: &'static str,
    pub n_from: usize,
    pub n_to: usize,
    pub abs_from: f64,
    pub abs_to: f64,
    pub joint_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub beta: f64,
    pub replications: usize,
    pub stats: Vec<FieldStat>,
    pub checks: Vec<Check>,
}

impl CellSummary {
    pub fn stat(&self, name: &str) -> Option<&FieldStat> {
        self.stats.iter().find(|s| s.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub n: usize,
    pub replication: usize,
    pub data_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_digest: String,
    pub master_seed: u64,
    pub model: String,
    pub known_lambda: Option<f64>,
    pub known_lambda_source: Option<String>,
    pub replication_seeds: Vec<SeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub mode: Mode,
    pub provenance: Provenance,
    pub cells: Vec<CellSummary>,
    pub trends: Vec<TrendCheck>,
    pub failed: Vec<FailedReplication>,
    /// Verdict of the check modes; `None` for `run` and `sweep-n`.
    pub passed: Option<bool>,
}

impl AggregateReport {
    pub fn cell(&self, n: usize, beta: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.n == n && c.beta == beta)
    }
}

/// Groups records by (n, beta) in first-seen order.
pub fn group_cells(records: &[ReplicationRecord]) -> Vec<((usize, f64), Vec<&ReplicationRecord>)> {
    let mut cells: Vec<((usize, f64), Vec<&ReplicationRecord>)> = Vec::new();
    for rec in records {
        match cells.iter_mut().find(|(k, _)| k.0 == rec.n && k.1 == rec.beta) {
            Some((_, v)) => v.push(rec),
            None => cells.push(((rec.n, rec.beta), vec![rec])),
        }
    }
    cells
}

/// Means and SEs of each column over the rows where it is defined.
pub fn column_stats(rows: &[Vec<Option<f64>>]) -> Vec<FieldStat> {
    VALUE_COLUMNS
        .iter()
        .enumerate()
        .filter_map(|(j, name)| {
            let values: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            if values.is_empty() {
                return None;
            }
            let (mean, se) = mean_se(&values);
            Some(FieldStat { name, mean, se })
        })
        .collect()
}

fn cell_checks(n: usize, dim: usize, lambda: Option<f64>, stats: &[FieldStat]) -> Vec<Check> {
    let nf = n as f64;
    let sqrt_log = nf.ln().sqrt() / nf;
    let find = |name: &str| stats.iter().find(|s| s.name == name);
    let mut checks = Vec::new();
    if let Some(s) = find("linked_minus_waic") {
        checks.push(Check::new("linked_gap", s, 2.0 * sqrt_log, 3.0));
    }
    if let Some(s) = find("eos_r1") {
        checks.push(Check::new("eos_r1", s, 1.0 / nf, 3.0));
    }
    if let Some(s) = find("eos_r2") {
        checks.push(Check::new("eos_r2", s, 1.0 / nf, 3.0));
    }
    if let Some(s) = find("waic_minus_gen") {
        checks.push(Check::new("waic_unbiased", s, 0.0, 3.0));
    }
    if let Some(s) = find("optimum_loss_gap") {
        checks.push(Check::new("optimum_loss", s, 2.0 * sqrt_log, 3.0));
    }
    if let (Some(s), Some(l)) = (find("imai_bias"), lambda) {
        checks.push(Check::new("imai_within_quarter", s, 0.25 * l, 0.0));
    }
    if let Some(s) = find("main_residual") {
        checks.push(Check::new("main_residual_bound", s, 0.5 * dim as f64, 0.0));
    }
    checks
}

fn trend(name: &'static str, from: (usize, &FieldStat), to: (usize, &FieldStat)) -> TrendCheck {
    let joint_se = from.1.se.unwrap_or(0.0).hypot(to.1.se.unwrap_or(0.0));
    let (abs_from, abs_to) = (from.1.mean.abs(), to.1.mean.abs());
    TrendCheck {
        name,
        n_from: from.0,
        n_to: to.0,
        abs_from,
        abs_to,
        joint_se,
        pass: abs_to <= abs_from + 3.0 * joint_se,
    }
}

fn trends(cells: &[CellSummary]) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    // The Imai estimate comes from the 1/log n chain, shared by every beta
    // of an n; take the first cell of each n.
    let mut imai: Vec<(usize, &FieldStat)> = Vec::new();
    for c in cells {
        if let Some(s) = c.stat("imai_bias") {
            if !imai.iter().any(|(n, _)| *n == c.n) {
                imai.push((c.n, s));
            }
        }
    }
    for pair in imai.windows(2) {
        out.push(trend("imai_bias_non_increasing", pair[0], pair[1]));
    }
    let residual: Vec<(usize, &FieldStat)> =
        cells.iter().filter_map(|c| c.stat("main_residual").map(|s| (c.n, s))).collect();
    if residual.len() >= 2 {
        out.push(trend("main_residual_shrinks", residual[0], residual[residual.len() - 1]));
    }
    out
}

pub fn aggregate(
    cfg: &ExperimentConfig,
    built: &BuiltModel,
    records: &[ReplicationRecord],
    failed: &[FailedReplication],
    seeds: Vec<(usize, usize, u64)>,
    config_digest: String,
) -> AggregateReport {
    let inputs = DerivedInputs { known_lambda: cfg.known_lambda };
    let dim = built.model.parameter_dim();
    let cells: Vec<CellSummary> = group_cells(records)
        .into_iter()
        .map(|((n, beta), recs)| {
            let rows: Vec<Vec<Option<f64>>> = recs.iter().map(|r| record_values(r, inputs)).collect();
            let stats = column_stats(&rows);
            let checks = cell_checks(n, dim, cfg.known_lambda, &stats);
            CellSummary { n, beta, replications: recs.len(), stats, checks }
        })
        .collect();
    let trends = trends(&cells);
    let all_named = |name: &str| {
        let found: Vec<bool> =
            cells.iter().flat_map(|c| c.checks.iter()).filter(|k| k.name == name).map(|k| k.pass).collect();
        !found.is_empty() && found.iter().all(|p| *p)
    };
    let passed = match cfg.mode {
        Mode::Run | Mode::SweepN => None,
        Mode::OracleCheck => {
            Some(!records.is_empty() && records.iter().all(|r| r.oracle.as_ref().is_some_and(|o| o.pass)))
        }
        Mode::EosCheck => Some(all_named("eos_r1") && all_named("eos_r2")),
        Mode::LinkedCheck => Some(all_named("linked_gap")),
    };
    AggregateReport {
        mode: cfg.mode,
        provenance: Provenance {
            config_digest,
            master_seed: cfg.master_seed,
            model: built.model.name().to_string(),
            known_lambda: cfg.known_lambda,
            known_lambda_source: cfg.known_lambda_source.clone(),
            replication_seeds: seeds
                .into_iter()
                .map(|(n, replication, data_seed)| SeedRecord { n, replication, data_seed })
                .collect(),
        },
        cells,
        trends,
        failed: failed.to_vec(),
        passed,
    }
}
