use std::time::Instant;

use sltcrit_cli::{run_experiment, ExperimentConfig};

fn seconds(replications: usize) -> f64 {
    let json = format!(
        r#"{{"mode": "run", "model": {{"type": "conjugate_normal_mean", "d": 1, "sigma": 1.0, "tau": 1.0, "mu0": [0.3]}},
            "n_grid": [200], "replications": {replications}, "betas": [1.0]}}"#
    );
    let cfg = ExperimentConfig::from_json(&json).unwrap();
    let start = Instant::now();
    run_experiment(&cfg).unwrap();
    start.elapsed().as_secs_f64()
}

#[test]
fn runtime_scales_linearly_in_replications() {
    // One worker, so that idle cores cannot hide the extra work.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (t10, t20) = pool.install(|| {
        seconds(2);
        (seconds(10), seconds(20))
    });
    let ratio = t20 / t10;
    assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "R=10 {t10:.3}s, R=20 {t20:.3}s");
}
