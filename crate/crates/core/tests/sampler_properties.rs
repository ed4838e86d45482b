use sltcrit::model::sample_truth;
use sltcrit::oracle::{conjugate_exact, conjugate_posterior};
use sltcrit::sampler::{diagnostics, posterior_expectation, posterior_variance, rhat};
use sltcrit::{run_chain, run_chains, ConjugateNormalMeanModel, Dataset, InverseTemperature, ModelSpec, SamplerConfig};

fn setup(n: usize) -> (ConjugateNormalMeanModel, Dataset) {
    let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3]).unwrap();
    let data = sample_truth(&m, n, 2024).unwrap();
    (m, data)
}

fn long_cfg(seed: u64) -> SamplerConfig {
    SamplerConfig { n_steps: 42_000, burn_in: 2_000, seed, ..Default::default() }
}

#[test]
fn stationarity_across_temperatures() {
    let (m, data) = setup(100);
    let betas = [
        InverseTemperature::wbic(100).unwrap(),
        InverseTemperature::new(0.5).unwrap(),
        InverseTemperature::new(1.0).unwrap(),
    ];
    for (k, beta) in betas.into_iter().enumerate() {
        let chain = run_chain(&m, &data, beta, &long_cfg(10 + k as u64)).unwrap();
        let (mean, var) = conjugate_posterior(&m, &data, beta).unwrap();
        let (est, se) = posterior_expectation(&chain, |w| w[0]).unwrap();
        assert!(chain.ess()[0] >= 1000.0, "ESS {}", chain.ess()[0]);
        assert!((est - mean[0]).abs() < 3.0 * se, "beta {}: {est} vs {} (se {se})", beta.value(), mean[0]);
        let v = posterior_variance(&chain, |w| w[0]).unwrap();
        assert!((v / var - 1.0).abs() < 0.10, "beta {}: var {v} vs {var}", beta.value());
    }
}

#[test]
fn posterior_variance_decreases_with_beta() {
    let (m, data) = setup(100);
    let vars: Vec<f64> = [0.1, 0.5, 1.0]
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let chain = run_chain(&m, &data, InverseTemperature::new(*b).unwrap(), &long_cfg(20 + k as u64)).unwrap();
            posterior_variance(&chain, |w| w[0]).unwrap()
        })
        .collect();
    assert!(vars[0] > vars[1] && vars[1] > vars[2], "{vars:?}");
    for (v, b) in vars.iter().zip([0.1, 0.5, 1.0]) {
        let exact = 1.0 / (100.0 * b + 1.0);
        assert!((v / exact - 1.0).abs() < 0.1);
    }
}

#[test]
fn variance_of_n_ln_matches_oracle() {
    let (m, data) = setup(100);
    let beta = InverseTemperature::new(1.0).unwrap();
    let chain = run_chain(&m, &data, beta, &long_cfg(31)).unwrap();
    let series: Vec<f64> = chain.draws().map(|w| -m.log_likelihood(&data, w)).collect();
    assert!(diagnostics::ess(&series) >= 2000.0);
    let v = posterior_variance(&chain, |w| -m.log_likelihood(&data, w)).unwrap();
    let exact = conjugate_exact(&m, &data, beta).unwrap().v_nln;
    assert!((v / exact - 1.0).abs() < 0.15, "{v} vs {exact}");
}

#[test]
fn mala_is_also_stationary() {
    let (m, data) = setup(100);
    let beta = InverseTemperature::new(1.0).unwrap();
    let cfg = SamplerConfig { algorithm: sltcrit::Algorithm::Mala, ..long_cfg(41) };
    let chain = run_chain(&m, &data, beta, &cfg).unwrap();
    let (mean, var) = conjugate_posterior(&m, &data, beta).unwrap();
    let (est, se) = posterior_expectation(&chain, |w| w[0]).unwrap();
    assert!((est - mean[0]).abs() < 3.0 * se);
    assert!((posterior_variance(&chain, |w| w[0]).unwrap() / var - 1.0).abs() < 0.1);
}

#[test]
fn dispersed_chains_converge() {
    let m = ConjugateNormalMeanModel::new(2, 1.0, 1.0, vec![0.3, -0.3]).unwrap();
    let data = sample_truth(&m, 100, 5).unwrap();
    let beta = InverseTemperature::new(1.0).unwrap();
    let cfg = SamplerConfig { n_chains: 4, ..long_cfg(51) };
    let chains = run_chains(&m, &data, beta, &cfg).unwrap();
    // Chains run on distinct seed streams from dispersed starting points.
    assert_ne!(chains[0].draw(0), chains[1].draw(0));
    for r in rhat(&chains).unwrap() {
        assert!(r < 1.01, "R-hat {r}");
    }
}

#[test]
fn frozen_chain_is_flagged() {
    let (m, data) = setup(100);
    let beta = InverseTemperature::new(1.0).unwrap();
    let mixing = run_chain(&m, &data, beta, &long_cfg(61)).unwrap();
    let frozen_cfg = SamplerConfig { step_size: 0.0, adapt: false, init: Some(vec![5.0]), ..long_cfg(62) };
    let frozen = run_chain(&m, &data, beta, &frozen_cfg).unwrap();
    let r = rhat(&[mixing, frozen]).unwrap();
    assert!(r[0] > 1.2, "R-hat {}", r[0]);
}

#[test]
fn identical_constant_chains_give_unit_rhat() {
    let (m, data) = setup(20);
    let beta = InverseTemperature::new(1.0).unwrap();
    let cfg = SamplerConfig { step_size: 0.0, init: Some(vec![0.5]), n_steps: 200, burn_in: 10, ..Default::default() };
    let a = run_chain(&m, &data, beta, &cfg).unwrap();
    let b = run_chain(&m, &data, beta, &cfg).unwrap();
    assert_eq!(rhat(&[a, b]).unwrap(), vec![1.0]);
}

#[test]
fn no_draw_leaves_the_box() {
    let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3]).unwrap().with_bound(0.35).unwrap();
    let data = sample_truth(&m, 5, 3).unwrap();
    let chain = run_chain(&m, &data, InverseTemperature::new(0.2).unwrap(), &long_cfg(71)).unwrap();
    assert!(chain.draws().all(|w| m.bounds().contains(w)));
    assert!(chain.max_log_posterior_error(&m, &data) <= 1e-10);
}
