use serde::{Deserialize, Serialize};

use super::{
    bayes_training_loss, functional_variance, gibbs_training_loss, imai_lambda, linked_waic, linked_waic_general_beta,
    optimum_loss_estimate, singular_fluctuation_hat, waic, wbic, Influence, PosteriorFunctionals,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainProvenance {
    pub seeds: Vec<u64>,
    pub config_digest: String,
}

/// Monte Carlo standard errors, one per report field. Zero for exact inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaMcSe {
    pub waic: f64,
    #[serde(rename = "waic_Tn")]
    pub waic_tn: f64,
    #[serde(rename = "waic_Vn")]
    pub waic_vn: f64,
    pub wbic: f64,
    pub lambda_hat: f64,
    pub nu_hat_at_wbic_temp: f64,
    pub nu_hat_at_beta: f64,
    pub linked_waic: f64,
    pub linked_waic_raw: f64,
    pub linked_waic_general: f64,
    pub gibbs_train: f64,
    pub optimum_loss_est: f64,
}

/// Every data-computable criterion for one dataset.
///
/// `linked_waic` is per datum, directly comparable with `waic` at
/// `beta_main = 1`; `linked_waic_raw` is the same estimate on the
/// `n * WAIC` scale. `linked_waic_general` is the general-temperature form
/// evaluated at `beta_main`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub n: usize,
    pub beta_main: f64,
    pub waic: f64,
    #[serde(rename = "waic_Tn")]
    pub waic_tn: f64,
    #[serde(rename = "waic_Vn")]
    pub waic_vn: f64,
    pub wbic: f64,
    pub lambda_hat: f64,
    pub nu_hat_at_wbic_temp: f64,
    pub nu_hat_at_beta: f64,
    pub linked_waic: f64,
    pub linked_waic_raw: f64,
    pub linked_waic_general: f64,
    pub gibbs_train: f64,
    pub optimum_loss_est: f64,
    pub mc_se: CriteriaMcSe,
    /// Smallest per-coordinate ESS across the chains used; `None` for exact
    /// inputs.
    pub min_ess: Option<f64>,
    pub chain_provenance: ChainProvenance,
}

impl CriteriaReport {
    /// Builds the report from functionals at `1/log n` and, optionally, at
    /// the main temperature. Without `pf_main` the WBIC posterior doubles as
    /// the main one.
    pub fn from_functionals(
        pf_wbic: &PosteriorFunctionals,
        pf_main: Option<&PosteriorFunctionals>,
        chain_provenance: ChainProvenance,
    ) -> Result<Self> {
        let main = pf_main.unwrap_or(pf_wbic);
        if main.n != pf_wbic.n {
            return Err(Error::DimensionMismatch { expected: pf_wbic.n, got: main.n });
        }
        let n = pf_wbic.n as f64;
        let log_n = n.ln();
        let bw = pf_wbic.beta.value();
        let b = main.beta.value();
        let linked = linked_waic(pf_wbic)?;
        let general = linked_waic_general_beta(pf_wbic, main)?;

        let linked_inf =
            Influence { nln: 1.0, nln_sq_dev: -bw * bw * (log_n - 1.0), sq_dev: 1.0 / (2.0 * log_n), pred_ratio: 0.0 };
        let general_wbic_se = pf_wbic.mc_se(Influence { nln_sq_dev: -bw * bw * (log_n - 1.0 / b), ..linked_inf });
        let general_main_se = main.mc_se(Influence { sq_dev: 0.5 * b * (1.0 - 1.0 / b), ..Default::default() });
        let linked_raw_se = pf_wbic.mc_se(linked_inf);

        let mc_se = CriteriaMcSe {
            waic: main.mc_se(Influence { pred_ratio: -1.0 / n, sq_dev: b / n, ..Default::default() }),
            waic_tn: main.mc_se(Influence { pred_ratio: -1.0 / n, ..Default::default() }),
            waic_vn: main.mc_se(Influence { sq_dev: 1.0, ..Default::default() }),
            wbic: pf_wbic.mc_se(Influence { nln: 1.0, ..Default::default() }),
            lambda_hat: pf_wbic.mc_se(Influence { nln_sq_dev: bw * bw, ..Default::default() }),
            nu_hat_at_wbic_temp: pf_wbic.mc_se(Influence { sq_dev: 0.5 * bw, ..Default::default() }),
            nu_hat_at_beta: main.mc_se(Influence { sq_dev: 0.5 * b, ..Default::default() }),
            linked_waic: linked_raw_se / n,
            linked_waic_raw: linked_raw_se,
            linked_waic_general: if pf_main.is_some() {
                general_wbic_se.hypot(general_main_se)
            } else {
                pf_wbic.mc_se(Influence {
                    nln_sq_dev: -bw * bw * (log_n - 1.0 / b),
                    sq_dev: 1.0 / (2.0 * log_n) + 0.5 * b * (1.0 - 1.0 / b),
                    ..linked_inf
                })
            },
            gibbs_train: main.mc_se(Influence { nln: 1.0 / n, ..Default::default() }),
            optimum_loss_est: pf_wbic.mc_se(Influence {
                nln: 1.0 / n,
                nln_sq_dev: -bw * bw * log_n / n,
                ..Default::default()
            }),
        };

        let min_ess = [Some(pf_wbic), pf_main]
            .into_iter()
            .flatten()
            .filter_map(|pf| pf.ess_summary.map(|e| e.min_coordinate))
            .reduce(f64::min);

        Ok(Self {
            n: pf_wbic.n,
            beta_main: b,
            waic: waic(main),
            waic_tn: bayes_training_loss(main),
            waic_vn: functional_variance(main),
            wbic: wbic(pf_wbic)?,
            lambda_hat: imai_lambda(pf_wbic)?,
            nu_hat_at_wbic_temp: singular_fluctuation_hat(pf_wbic),
            nu_hat_at_beta: singular_fluctuation_hat(main),
            linked_waic: linked.per_datum,
            linked_waic_raw: linked.raw,
            linked_waic_general: general.per_datum,
            gibbs_train: gibbs_training_loss(main),
            optimum_loss_est: optimum_loss_estimate(pf_wbic)?,
            mc_se,
            min_ess,
            chain_provenance,
        })
    }

    /// Numeric fields as `(name, value, mc_se)` in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, f64, f64)> {
        let s = &self.mc_se;
        vec![
            ("waic", self.waic, s.waic),
            ("waic_Tn", self.waic_tn, s.waic_tn),
            ("waic_Vn", self.waic_vn, s.waic_vn),
            ("wbic", self.wbic, s.wbic),
            ("lambda_hat", self.lambda_hat, s.lambda_hat),
            ("nu_hat_at_wbic_temp", self.nu_hat_at_wbic_temp, s.nu_hat_at_wbic_temp),
            ("nu_hat_at_beta", self.nu_hat_at_beta, s.nu_hat_at_beta),
            ("linked_waic", self.linked_waic, s.linked_waic),
            ("linked_waic_raw", self.linked_waic_raw, s.linked_waic_raw),
            ("linked_waic_general", self.linked_waic_general, s.linked_waic_general),
            ("gibbs_train", self.gibbs_train, s.gibbs_train),
            ("optimum_loss_est", self.optimum_loss_est, s.optimum_loss_est),
        ]
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["n".to_string(), "beta_main".to_string()];
        for (name, _, _) in self.fields() {
            h.push(name.to_string());
        }
        for (name, _, _) in self.fields() {
            h.push(format!("{name}_mc_se"));
        }
        h.extend(["min_ess".to_string(), "seeds".to_string(), "config_digest".to_string()]);
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![self.n.to_string(), self.beta_main.to_string()];
        let fields = self.fields();
        r.extend(fields.iter().map(|f| f.1.to_string()));
        r.extend(fields.iter().map(|f| f.2.to_string()));
        r.push(self.min_ess.map(|e| e.to_string()).unwrap_or_default());
        r.push(self.chain_provenance.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"));
        r.push(self.chain_provenance.config_digest.clone());
        r
    }

    /// One header line plus one data row.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(self.csv_header())?;
        wtr.write_record(self.csv_row())?;
        let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
