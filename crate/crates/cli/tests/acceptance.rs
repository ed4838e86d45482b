//! End-to-end acceptance experiments. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use serde_json::{json, Value};
use sltcrit::criteria::{bayes_training_loss, functional_variance};
use sltcrit::model::sample_truth;
use sltcrit::oracle::{conjugate_exact, quadrature_bayes_gen_loss, QuadratureOracle};
use sltcrit::{ChainProvenance, ConjugateNormalMeanModel, CriteriaReport, GaussianMixtureModel, InverseTemperature};
use sltcrit_cli::output::{AGGREGATE_JSON, REPLICATIONS_CSV, SUMMARY_CSV};
use sltcrit_cli::{
    invariant_violations, run_experiment, write_outputs, ExperimentConfig, ExperimentOutput, ReplicationRecord,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn sampler(n_steps: usize, burn_in: usize) -> Value {
    json!({"algorithm": "random-walk-metropolis", "step_size": 0.1, "n_steps": n_steps, "burn_in": burn_in,
           "thin": 1, "n_chains": 1, "seed": 0, "adapt": true, "init": null})
}

fn mu0(d: usize) -> Vec<f64> {
    [0.3, -0.2, 0.1, 0.0][..d].to_vec()
}

fn conjugate(d: usize) -> Value {
    json!({"type": "conjugate_normal_mean", "d": d, "sigma": 1.0, "tau": 1.0, "mu0": mu0(d)})
}

fn run(cfg: Value) -> Result<(ExperimentOutput, Duration)> {
    let cfg = ExperimentConfig::from_json(&cfg.to_string())?;
    let start = Instant::now();
    let out = run_experiment(&cfg)?;
    Ok((out, start.elapsed()))
}

fn check_pass(out: &ExperimentOutput, n: usize, name: &str) -> Result<(bool, String)> {
    let cell = out.aggregate.cells.iter().find(|c| c.n == n).ok_or_else(|| anyhow::anyhow!("no cell at n={n}"))?;
    let c = cell.check(name).ok_or_else(|| anyhow::anyhow!("no {name} check at n={n}"))?;
    Ok((c.pass, format!("n={n} {name} {:.3e} (tol {:.3e})", c.value, c.tolerance)))
}

fn criterion_1(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "oracle-check", "model": conjugate(1), "n_grid": [100], "betas": [1.0],
        "sampler": sampler(42_000, 2_000)
    }))?;
    let rec = &out.records[0];
    let oracle = rec.oracle.as_ref().expect("oracle-check compares");
    let ess = rec.report.min_ess.unwrap_or(0.0);
    let pass = out.passed() == Some(true) && ess >= 1000.0 && t < Duration::from_secs(60);
    let detail = format!("max |z| {:.2}, min ESS {ess:.0}, {:.1}s", oracle.max_z, t.as_secs_f64());
    records.extend(out.records);
    Ok(Outcome { pass, detail })
}

fn criterion_2() -> Result<Outcome> {
    let start = Instant::now();
    let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3])?;
    let settings = [
        (20, InverseTemperature::new(1.0)?),
        (100, InverseTemperature::wbic(100)?),
        (500, InverseTemperature::new(0.5)?),
    ];
    let mut worst: f64 = 0.0;
    for (k, (n, beta)) in settings.into_iter().enumerate() {
        let data = sample_truth(&m, n, 2_000 + k as u64)?;
        let exact = conjugate_exact(&m, &data, beta)?;
        let q = QuadratureOracle::auto(&m, &data, beta, 401)?;
        let qf = q.functionals()?;
        let g = quadrature_bayes_gen_loss(&q, (0.3 - 12.0, 0.3 + 12.0), 1601)?;
        for (a, b) in [
            (qf.e_nln, exact.e_nln),
            (qf.v_nln, exact.v_nln),
            (bayes_training_loss(&qf), exact.bayes_train_loss),
            (functional_variance(&qf), exact.functional_variance),
            (g, exact.bayes_gen_loss),
        ] {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    let t = start.elapsed();
    Ok(Outcome {
        pass: worst < 1e-8 && t < Duration::from_secs(10),
        detail: format!("max relative difference {worst:.2e}, {:.1}s", t.as_secs_f64()),
    })
}

fn criterion_3(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "sweep-n", "model": conjugate(4), "known_lambda": 2.0, "known_lambda_source": "regular model, d/2",
        "n_grid": [100, 1000, 10000], "replications": 100, "betas": [], "sampler": sampler(5_000, 1_000)
    }))?;
    let (at_max, detail) = check_pass(&out, 10_000, "imai_within_quarter")?;
    let trends: Vec<_> = out.aggregate.trends.iter().filter(|t| t.name == "imai_bias_non_increasing").collect();
    let trend_ok = trends.len() == 2 && trends.iter().all(|t| t.pass);
    let mean = out.aggregate.cells.iter().find(|c| c.n == 10_000).and_then(|c| c.stat("lambda_hat")).map(|s| s.mean);
    let pass = at_max && trend_ok && t < Duration::from_secs(600);
    records.extend(out.records);
    Ok(Outcome {
        pass,
        detail: format!(
            "mean lambda_hat {:.4} at n=1e4, {detail}, |bias| trend {}, {:.0}s",
            mean.unwrap_or(f64::NAN),
            if trend_ok { "ok" } else { "violated" },
            t.as_secs_f64()
        ),
    })
}

fn criterion_4(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let mut pass = true;
    let mut details = Vec::new();
    let mut total = Duration::ZERO;
    for d in [1usize, 2] {
        let (out, t) = run(json!({
            "mode": "sweep-n", "engine": "oracle", "model": conjugate(d), "known_lambda": d as f64 / 2.0,
            "known_lambda_source": "regular model, d/2", "n_grid": [100, 1000, 10000], "replications": 200,
            "betas": [1.0]
        }))?;
        total += t;
        let (bound, _) = check_pass(&out, 10_000, "main_residual_bound")?;
        let trend = out.aggregate.trends.iter().find(|t| t.name == "main_residual_shrinks");
        let r = |n: usize| out.aggregate.cell(n, 1.0).and_then(|c| c.stat("main_residual")).map(|s| s.mean);
        pass &= bound && trend.is_some_and(|t| t.pass);
        details.push(format!(
            "d={d}: r(1e2) {:.4}, r(1e4) {:.4}",
            r(100).unwrap_or(f64::NAN),
            r(10_000).unwrap_or(f64::NAN)
        ));
        records.extend(out.records);
    }
    pass &= total < Duration::from_secs(300);
    Ok(Outcome { pass, detail: format!("{}, {:.1}s", details.join("; "), total.as_secs_f64()) })
}

fn criterion_5(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "linked-check", "model": conjugate(2), "n_grid": [100, 1000, 10000], "replications": 200,
        "betas": [1.0], "sampler": sampler(3_000, 1_000)
    }))?;
    let mut details = Vec::new();
    for n in [100, 1000, 10000] {
        details.push(check_pass(&out, n, "linked_gap")?.1);
    }
    let pass = out.passed() == Some(true) && t < Duration::from_secs(900);
    records.extend(out.records);
    Ok(Outcome { pass, detail: format!("{}, {:.0}s", details.join("; "), t.as_secs_f64()) })
}

fn criterion_6(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "run", "engine": "oracle", "model": conjugate(1), "n_grid": [1000], "replications": 500, "betas": [1.0]
    }))?;
    let (ok, detail) = check_pass(&out, 1000, "waic_unbiased")?;
    records.extend(out.records);
    Ok(Outcome { pass: ok && t < Duration::from_secs(300), detail: format!("{detail}, {:.1}s", t.as_secs_f64()) })
}

fn criterion_7(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "eos-check", "engine": "oracle", "model": conjugate(1), "n_grid": [1000], "replications": 500,
        "betas": [0.5, 1.0]
    }))?;
    let mut details = Vec::new();
    for c in &out.aggregate.cells {
        for k in c.checks.iter().filter(|k| k.name.starts_with("eos_")) {
            details.push(format!("b={} {} {:.2e} (tol {:.2e})", c.beta, k.name, k.value, k.tolerance));
        }
    }
    let pass = out.passed() == Some(true) && t < Duration::from_secs(300);
    records.extend(out.records);
    Ok(Outcome { pass, detail: format!("{}, {:.1}s", details.join("; "), t.as_secs_f64()) })
}

fn criterion_8(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let (out, t) = run(json!({
        "mode": "run", "model": conjugate(1), "n_grid": [10000], "replications": 100, "betas": [],
        "sampler": sampler(5_000, 1_000)
    }))?;
    let (pass, detail) = check_pass(&out, 10_000, "optimum_loss")?;
    records.extend(out.records);
    Ok(Outcome { pass, detail: format!("{detail}, {:.0}s", t.as_secs_f64()) })
}

fn criterion_9(records: &mut Vec<ReplicationRecord>) -> Result<Outcome> {
    let fixed_b = 1.5;
    let (out, t) = run(json!({
        "mode": "run", "model": {"type": "gaussian_mixture", "fixed_b": fixed_b}, "n_grid": [1000],
        "replications": 20, "betas": [1.0], "sampler": sampler(12_000, 2_000)
    }))?;
    let m = GaussianMixtureModel::with_fixed_b(fixed_b)?;
    // Each replication's dataset is regenerated from its recorded seed.
    let compare = |rec: &ReplicationRecord| -> Result<Vec<(&'static str, f64)>> {
        let data = sample_truth(&m, rec.n, rec.data_seed)?;
        let qw = QuadratureOracle::auto(&m, &data, InverseTemperature::wbic(rec.n)?, 401)?.functionals()?;
        let q1 = QuadratureOracle::auto(&m, &data, InverseTemperature::new(1.0)?, 401)?.functionals()?;
        let exact = CriteriaReport::from_functionals(&qw, Some(&q1), ChainProvenance::default())?;
        let r = &rec.report;
        Ok(vec![
            ("wbic", (r.wbic - exact.wbic) / r.mc_se.wbic),
            ("lambda_hat", (r.lambda_hat - exact.lambda_hat) / r.mc_se.lambda_hat),
            ("V_n", (r.waic_vn - exact.waic_vn) / r.mc_se.waic_vn),
        ])
    };
    let first = compare(&out.records[0])?;
    let pass = first.iter().all(|(_, z)| z.abs() <= 3.0);
    let mut within = 0;
    for rec in &out.records {
        within += compare(rec)?.iter().filter(|(_, z)| z.abs() <= 3.0).count();
    }
    let mean_lambda = out.aggregate.cells[0].stat("lambda_hat").map(|s| (s.mean, s.se.unwrap_or(f64::NAN)));
    let (ml, ms) = mean_lambda.unwrap_or((f64::NAN, f64::NAN));
    records.extend(out.records);
    Ok(Outcome {
        pass,
        detail: format!(
            "z {}; {within}/{} field comparisons within 3 SE over all replications; mean lambda_hat {ml:.4} (se {ms:.4}), {:.0}s",
            first.iter().map(|(k, z)| format!("{k} {z:+.2}")).collect::<Vec<_>>().join(", "),
            3 * 20,
            t.as_secs_f64()
        ),
    })
}

fn criterion_10(records: &[ReplicationRecord]) -> Result<Outcome> {
    let base = json!({
        "mode": "sweep-n", "model": conjugate(2), "known_lambda": 1.0, "n_grid": [50, 200], "replications": 4,
        "betas": [0.5, 1.0], "sampler": sampler(4_000, 1_000), "test_set_size": 1000, "master_seed": 99
    });
    let tmp = tempfile::tempdir()?;
    let mut bytes = Vec::new();
    for dir in ["a", "b"] {
        let cfg = ExperimentConfig::from_json(&base.to_string())?;
        let out = run_experiment(&cfg)?;
        let path = tmp.path().join(dir);
        write_outputs(&path, &cfg, &out)?;
        let files: Vec<Vec<u8>> = [REPLICATIONS_CSV, SUMMARY_CSV, AGGREGATE_JSON]
            .iter()
            .map(|f| std::fs::read(path.join(f)))
            .collect::<std::io::Result<_>>()?;
        bytes.push(files);
    }
    let identical = bytes[0] == bytes[1];

    let mut shifted_cfg = base.clone();
    shifted_cfg["log_prior_shift"] = json!(-250.75);
    let (plain, _) = run(base)?;
    let (shifted, _) = run(shifted_cfg)?;
    ensure!(plain.records.len() == shifted.records.len(), "record counts differ");
    let shift_invariant = plain.records.iter().zip(&shifted.records).all(|(a, b)| {
        a.report.fields() == b.report.fields()
            && a.bayes_gen_loss == b.bayes_gen_loss
            && a.gibbs_gen_loss == b.gibbs_gen_loss
    });

    let mut violations = Vec::new();
    for rec in records.iter().chain(&plain.records) {
        for v in invariant_violations(rec) {
            violations.push(format!("n={} b={} r={}: {v}", rec.n, rec.beta, rec.replication));
        }
    }
    let pass = identical && shift_invariant && violations.is_empty();
    Ok(Outcome {
        pass,
        detail: format!(
            "byte-identical {identical}, prior shift invariant {shift_invariant}, {} records checked, {} violations{}",
            records.len() + plain.records.len(),
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    })
}

fn report(k: usize, outcome: Result<Outcome>) -> bool {
    match outcome {
        Ok(o) => {
            println!("criterion {k}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            o.pass
        }
        Err(e) => {
            println!("criterion {k}: FAIL error: {e:#}");
            false
        }
    }
}

fn main() -> ExitCode {
    // The test harness passes flags such as --list; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut records = Vec::new();
    let mut all = true;
    all &= report(1, criterion_1(&mut records));
    all &= report(2, criterion_2());
    all &= report(3, criterion_3(&mut records));
    all &= report(4, criterion_4(&mut records));
    all &= report(5, criterion_5(&mut records));
    all &= report(6, criterion_6(&mut records));
    all &= report(7, criterion_7(&mut records));
    all &= report(8, criterion_8(&mut records));
    all &= report(9, criterion_9(&mut records));
    all &= report(10, criterion_10(&records));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
