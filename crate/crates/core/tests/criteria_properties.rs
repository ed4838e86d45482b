use sltcrit::criteria::{
    bayes_training_loss, functional_variance, generalization_losses_mc, gibbs_generalization_loss, gibbs_training_loss,
    linked_waic, linked_waic_general_beta, singular_fluctuation_hat, waic, wbic,
};
use sltcrit::model::sample_truth;
use sltcrit::oracle::{conjugate_exact, conjugate_gibbs_gen_loss};
use sltcrit::{
    functionals, run_chain, ChainProvenance, ConjugateNormalMeanModel, CriteriaReport, GaussianMixtureModel,
    InverseTemperature, PriorShift, SamplerConfig,
};

fn cfg(seed: u64) -> SamplerConfig {
    SamplerConfig { n_steps: 6_000, burn_in: 1_000, seed, ..Default::default() }
}

#[test]
fn jensen_orderings_hold_on_chains() {
    let m = GaussianMixtureModel::new(3.0).unwrap();
    for seed in 0..5 {
        let data = sample_truth(&m, 150, seed).unwrap();
        for beta in [InverseTemperature::wbic(150).unwrap(), InverseTemperature::new(1.0).unwrap()] {
            let chain = run_chain(&m, &data, beta, &cfg(seed)).unwrap();
            let pf = functionals(&m, &data, &chain).unwrap();
            for (p, l) in pf.per_datum_pred_logp.iter().zip(&pf.per_datum_logp_mean) {
                assert!(*p >= l - 1e-12 * l.abs());
            }
            assert!(bayes_training_loss(&pf) <= gibbs_training_loss(&pf) + 1e-12);
            assert!(functional_variance(&pf) >= 0.0);
            assert!(singular_fluctuation_hat(&pf) >= 0.0);
        }
    }
}

#[test]
fn generalization_orderings_and_gibbs_loss() {
    let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3]).unwrap();
    let data = sample_truth(&m, 50, 3).unwrap();
    let beta = InverseTemperature::new(1.0).unwrap();
    let chain = run_chain(&m, &data, beta, &SamplerConfig { n_steps: 21_000, seed: 4, ..cfg(0) }).unwrap();
    let test = sample_truth(&m, 20_000, 5).unwrap();
    let (g, gp) = generalization_losses_mc(&m, &chain, &test).unwrap();
    assert!(g <= gp);
    assert_eq!(gp, gibbs_generalization_loss(&m, &chain, &test).unwrap());

    // E_w[L(w)] = L(mu0) + E_w[(w - mu0)^2] / 2 in closed form; the MC value
    // mixes test-set noise (per-datum SD about 0.7) with chain noise.
    let exact = conjugate_gibbs_gen_loss(&m, &data, beta).unwrap();
    let test_se = 0.71 / (test.len() as f64).sqrt();
    let (_, chain_se) = sltcrit::sampler::posterior_expectation(&chain, |w| 0.5 * (w[0] - 0.3).powi(2)).unwrap();
    let joint = test_se.hypot(chain_se);
    assert!((gp - exact).abs() < 3.0 * joint, "{gp} vs {exact} (se {joint})");
}

#[test]
fn wbic_is_n_times_gibbs_training_loss() {
    let m = GaussianMixtureModel::new(3.0).unwrap();
    let data = sample_truth(&m, 120, 8).unwrap();
    let beta = InverseTemperature::wbic(120).unwrap();
    let pf = functionals(&m, &data, &run_chain(&m, &data, beta, &cfg(9)).unwrap()).unwrap();
    let w = wbic(&pf).unwrap();
    assert!((w - 120.0 * gibbs_training_loss(&pf)).abs() <= 1e-12 * w.abs());
    assert!((waic(&pf) - bayes_training_loss(&pf) - beta.value() * functional_variance(&pf) / 120.0).abs() < 1e-14);
}

#[test]
fn prior_shift_changes_no_criterion() {
    let m = GaussianMixtureModel::new(3.0).unwrap();
    let shifted = PriorShift { inner: m.clone(), shift: -7.25 };
    let data = sample_truth(&m, 100, 10).unwrap();
    let bw = InverseTemperature::wbic(100).unwrap();
    let b1 = InverseTemperature::new(1.0).unwrap();
    let report = |model: &dyn sltcrit::ModelSpec| {
        let pw = functionals(model, &data, &run_chain(model, &data, bw, &cfg(11)).unwrap()).unwrap();
        let p1 = functionals(model, &data, &run_chain(model, &data, b1, &cfg(12)).unwrap()).unwrap();
        CriteriaReport::from_functionals(&pw, Some(&p1), ChainProvenance::default()).unwrap()
    };
    assert_eq!(report(&m), report(&shifted));
}

#[test]
fn general_form_recomposes_with_exact_inputs() {
    let m = ConjugateNormalMeanModel::new(2, 1.0, 1.0, vec![0.3, -0.1]).unwrap();
    let data = sample_truth(&m, 200, 15).unwrap();
    let n = 200.0f64;
    let ew = conjugate_exact(&m, &data, InverseTemperature::wbic(200).unwrap()).unwrap();
    let eh = conjugate_exact(&m, &data, InverseTemperature::new(0.5).unwrap()).unwrap();
    let got = linked_waic_general_beta(&ew.functionals(), &eh.functionals()).unwrap().raw;
    let bw = 1.0 / n.ln();
    let lambda = bw * bw * ew.v_nln;
    let want = ew.e_nln - lambda * (n.ln() - 2.0)
        + ew.functional_variance / (2.0 * n.ln())
        + 0.25 * eh.functional_variance * (1.0 - 2.0);
    assert!((got - want).abs() <= 1e-12 * want.abs());

    let e1 = conjugate_exact(&m, &data, InverseTemperature::new(1.0).unwrap()).unwrap();
    let at_one = linked_waic_general_beta(&ew.functionals(), &e1.functionals()).unwrap().raw;
    let plain = linked_waic(&ew.functionals()).unwrap().raw;
    assert!((at_one - plain).abs() <= 1e-12 * plain.abs());
}

#[test]
fn singular_fluctuation_near_half_dimension() {
    // Regular model at b = 1: the plug-in (b/2) V_n averages to about d/2.
    let m = ConjugateNormalMeanModel::new(1, 1.0, 1.0, vec![0.3]).unwrap();
    let beta = InverseTemperature::new(1.0).unwrap();
    let reps = 100;
    let mean: f64 = (0..reps)
        .map(|r| {
            let data = sample_truth(&m, 1000, 500 + r).unwrap();
            let chain = run_chain(&m, &data, beta, &cfg(600 + r)).unwrap();
            singular_fluctuation_hat(&functionals(&m, &data, &chain).unwrap())
        })
        .sum::<f64>()
        / reps as f64;
    assert!((mean - 0.5).abs() <= 0.25 * 0.5, "mean nu_hat {mean}");
}
