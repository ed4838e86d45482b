use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::aggregate::{record_values, DerivedInputs, VALUE_COLUMNS};
use crate::config::ExperimentConfig;
use crate::experiment::ExperimentOutput;

pub const REPLICATIONS_CSV: &str = "replications.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";

const REPORT_SE_COLUMNS: &[&str] = &[
    "waic_mc_se",
    "waic_Tn_mc_se",
    "waic_Vn_mc_se",
    "wbic_mc_se",
    "lambda_hat_mc_se",
    "nu_hat_at_wbic_temp_mc_se",
    "nu_hat_at_beta_mc_se",
    "linked_waic_mc_se",
    "linked_waic_raw_mc_se",
    "linked_waic_general_mc_se",
    "gibbs_train_mc_se",
    "optimum_loss_est_mc_se",
];

/// Index of the first value column in `replications.csv`.
pub const FIRST_VALUE_COLUMN: usize = 5;

pub fn replications_header() -> Vec<String> {
    let mut h: Vec<String> = ["n", "beta", "replication", "data_seed", "status"].map(String::from).to_vec();
    h.extend(VALUE_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(REPORT_SE_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(["min_ess", "chain_seeds", "error"].map(String::from));
    h
}

fn opt(v: Option<f64>) -> String {
    // Display prints the shortest string that parses back to the same f64.
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(digest: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_digest={digest}")?;
    let mut wtr = csv::Writer::from_writer(buf);
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(r)?;
    }
    Ok(wtr.into_inner().map_err(|e| e.into_error())?)
}

pub fn replications_csv(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<Vec<u8>> {
    let inputs = DerivedInputs { known_lambda: cfg.known_lambda };
    let mut rows = Vec::with_capacity(out.records.len() + out.failed.len());
    for rec in &out.records {
        let mut row = vec![
            rec.n.to_string(),
            rec.beta.to_string(),
            rec.replication.to_string(),
            rec.data_seed.to_string(),
            "ok".to_string(),
        ];
        row.extend(record_values(rec, inputs).into_iter().map(opt));
        row.extend(rec.report.fields().into_iter().map(|f| f.2.to_string()));
        row.push(opt(rec.report.min_ess));
        row.push(rec.report.chain_provenance.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"));
        row.push(String::new());
        rows.push(row);
    }
    let blanks = VALUE_COLUMNS.len() + REPORT_SE_COLUMNS.len() + 2;
    for f in &out.failed {
        let mut row =
            vec![f.n.to_string(), String::new(), f.replication.to_string(), f.data_seed.to_string(), "failed".into()];
        row.extend(std::iter::repeat_n(String::new(), blanks));
        row.push(f.error.clone());
        rows.push(row);
    }
    csv_bytes(&out.aggregate.provenance.config_digest, replications_header(), rows)
}

/// Long format: one row per cell statistic, then one per check.
pub fn summary_csv(out: &ExperimentOutput) -> Result<Vec<u8>> {
    let header =
        ["kind", "n", "beta", "replications", "name", "mean", "se", "tolerance", "pass"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for c in &out.aggregate.cells {
        let lead = |kind: &str| vec![kind.to_string(), c.n.to_string(), c.beta.to_string(), c.replications.to_string()];
        for s in &c.stats {
            let mut r = lead("stat");
            r.extend([s.name.to_string(), s.mean.to_string(), opt(s.se), String::new(), String::new()]);
            rows.push(r);
        }
        for k in &c.checks {
            let mut r = lead("check");
            r.extend([k.name.to_string(), k.value.to_string(), opt(k.se), k.tolerance.to_string(), k.pass.to_string()]);
            rows.push(r);
        }
    }
    csv_bytes(&out.aggregate.provenance.config_digest, header, rows)
}

pub fn aggregate_json(out: &ExperimentOutput) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&out.aggregate)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the three result files into `dir` and returns their paths.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        (REPLICATIONS_CSV, replications_csv(cfg, out)?),
        (SUMMARY_CSV, summary_csv(out)?),
        (AGGREGATE_JSON, aggregate_json(out)?),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}
