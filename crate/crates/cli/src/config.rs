use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sltcrit::{
    ConjugateNormalMeanModel, Dataset, GaussianMixtureModel, ModelSpec, PriorShift, ReducedRankRegressionModel,
    SamplerConfig,
};

/// Smallest test set accepted for Monte Carlo generalization losses in
/// `eos-check`.
pub const MIN_EOS_TEST_SET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    SweepN,
    OracleCheck,
    EosCheck,
    LinkedCheck,
}

/// How posterior functionals are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Mcmc,
    /// Closed forms; conjugate model only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    ConjugateNormalMean {
        d: usize,
        sigma: f64,
        tau: f64,
        mu0: Vec<f64>,
        #[serde(default)]
        prior_mean: Option<Vec<f64>>,
        #[serde(default)]
        bound: Option<f64>,
    },
    GaussianMixture {
        /// Half-width of the box for `b`; unused when `fixed_b` is set.
        #[serde(default)]
        half_width: Option<f64>,
        #[serde(default)]
        fixed_b: Option<f64>,
    },
    ReducedRankRegression {
        input_dim: usize,
        output_dim: usize,
        rank: usize,
        a0: Vec<f64>,
        b0: Vec<f64>,
        half_width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    /// RLCT supplied by the experimenter, with its source.
    #[serde(default)]
    pub known_lambda: Option<f64>,
    #[serde(default)]
    pub known_lambda_source: Option<String>,
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    /// Main temperatures. An empty list runs only the `1/log n` chain.
    #[serde(default = "unit_beta")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Fresh truth draws per replication for Monte Carlo generalization
    /// losses; 0 disables them.
    #[serde(default)]
    pub test_set_size: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub engine: Engine,
    /// Observations from a file instead of the truth sampler (`run` only).
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
    /// Constant added to the log-prior; criteria must not depend on it.
    #[serde(default)]
    pub log_prior_shift: f64,
}

fn one() -> usize {
    1
}

fn unit_beta() -> Vec<f64> {
    vec![1.0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A built model, keeping the concrete conjugate model for the oracle.
pub struct BuiltModel {
    pub model: Box<dyn ModelSpec>,
    pub conjugate: Option<ConjugateNormalMeanModel>,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, excluding `output_dir` so that
    /// the same experiment written to two places carries one digest.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_conjugate(&self) -> bool {
        matches!(self.model, ModelConfig::ConjugateNormalMean { .. })
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.replications >= 1, "replications must be >= 1");
        ensure!(!self.n_grid.is_empty(), "n_grid must not be empty");
        ensure!(self.n_grid.iter().all(|&n| n >= 3), "every n in n_grid must be >= 3");
        ensure!(self.betas.iter().all(|b| *b > 0.0 && b.is_finite()), "betas must be positive and finite");
        ensure!(self.log_prior_shift.is_finite(), "log_prior_shift must be finite");
        if let Some(l) = self.known_lambda {
            ensure!(l > 0.0 && l.is_finite(), "known_lambda must be positive");
        }
        self.sampler.validate()?;
        match self.mode {
            Mode::Run => ensure!(self.n_grid.len() == 1, "mode run takes exactly one n; use sweep-n for a grid"),
            Mode::SweepN => {}
            Mode::OracleCheck => {
                ensure!(self.is_conjugate(), "oracle-check needs the conjugate_normal_mean model");
                ensure!(
                    self.engine == Engine::Mcmc,
                    "oracle-check compares MCMC against the oracle; set engine to mcmc"
                );
            }
            Mode::EosCheck => {
                ensure!(!self.betas.is_empty(), "eos-check needs at least one beta");
                ensure!(
                    self.is_conjugate() || self.test_set_size >= MIN_EOS_TEST_SET,
                    "eos-check needs the conjugate model or test_set_size >= {MIN_EOS_TEST_SET}"
                );
            }
            Mode::LinkedCheck => {
                ensure!(self.betas.contains(&1.0), "linked-check needs beta = 1 in betas");
            }
        }
        if self.engine == Engine::Oracle {
            ensure!(self.is_conjugate(), "engine oracle is only available for conjugate_normal_mean");
            ensure!(
                self.test_set_size == 0,
                "engine oracle computes generalization losses exactly; drop test_set_size"
            );
        }
        if self.data_csv.is_some() {
            ensure!(self.mode == Mode::Run, "data_csv is only supported in mode run");
            ensure!(self.replications == 1, "data_csv fixes the dataset; use replications = 1");
            ensure!(self.test_set_size == 0, "data_csv has no truth to draw test sets from");
        }
        self.build_model()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<BuiltModel> {
        let source = self.known_lambda_source.clone().unwrap_or_else(|| "experiment config".into());
        let (model, conjugate): (Box<dyn ModelSpec>, _) = match &self.model {
            ModelConfig::ConjugateNormalMean { d, sigma, tau, mu0, prior_mean, bound } => {
                let mut m = ConjugateNormalMeanModel::new(*d, *sigma, *tau, mu0.clone())?;
                if let Some(b) = bound {
                    m = m.with_bound(*b)?;
                }
                if let Some(pm) = prior_mean {
                    m = m.with_prior_mean(pm.clone())?;
                }
                if let Some(l) = self.known_lambda {
                    m = m.with_known_lambda(l, source);
                }
                (wrap(m.clone(), self.log_prior_shift), Some(m))
            }
            ModelConfig::GaussianMixture { half_width, fixed_b } => {
                let mut m = match (half_width, fixed_b) {
                    (None, Some(b)) => GaussianMixtureModel::with_fixed_b(*b)?,
                    (Some(hw), None) => GaussianMixtureModel::new(*hw)?,
                    _ => bail!("gaussian_mixture takes exactly one of half_width and fixed_b"),
                };
                if let Some(l) = self.known_lambda {
                    m = m.with_known_lambda(l, source);
                }
                (wrap(m, self.log_prior_shift), None)
            }
            ModelConfig::ReducedRankRegression { input_dim, output_dim, rank, a0, b0, half_width } => {
                let mut m = ReducedRankRegressionModel::new(
                    *input_dim,
                    *output_dim,
                    *rank,
                    a0.clone(),
                    b0.clone(),
                    *half_width,
                )?;
                if let Some(l) = self.known_lambda {
                    m = m.with_known_lambda(l, source);
                }
                (wrap(m, self.log_prior_shift), None)
            }
        };
        Ok(BuiltModel { model, conjugate })
    }

    /// Loads `data_csv` and checks it against the model and `n_grid`.
    pub fn load_data(&self, model: &dyn ModelSpec) -> Result<Option<Dataset>> {
        let Some(path) = &self.data_csv else {
            return Ok(None);
        };
        let data = Dataset::from_csv_path(path).with_context(|| format!("loading {}", path.display()))?;
        ensure!(
            data.dim() == model.observation_dim(),
            "{} has {} columns; the model expects {}",
            path.display(),
            data.dim(),
            model.observation_dim()
        );
        ensure!(self.n_grid == [data.len()], "n_grid must be [{}] to match the rows of {}", data.len(), path.display());
        Ok(Some(data))
    }
}

fn wrap<M: ModelSpec + 'static>(m: M, shift: f64) -> Box<dyn ModelSpec> {
    if shift == 0.0 {
        Box::new(m)
    } else {
        Box::new(PriorShift { inner: m, shift })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "mode": "run",
        "model": {"type": "conjugate_normal_mean", "d": 1, "sigma": 1.0, "tau": 1.0, "mu0": [0.3]},
        "n_grid": [100]
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.betas, vec![1.0]);
        assert_eq!(cfg.engine, Engine::Mcmc);
        assert_eq!(cfg.sampler, SamplerConfig::default());
    }

    #[test]
    fn unknown_keys_fail_loudly() {
        let bad = BASE.replace("\"n_grid\"", "\"colour\": 1, \"n_grid\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad_model = BASE.replace("\"d\": 1", "\"d\": 1, \"extra\": 2");
        assert!(ExperimentConfig::from_json(&bad_model).is_err());
        let bad_sampler = BASE.replace("\"n_grid\"", "\"sampler\": {\"steps\": 3}, \"n_grid\"");
        assert!(ExperimentConfig::from_json(&bad_sampler).is_err());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(ExperimentConfig::from_json(&BASE.replace("[100]", "[2]")).is_err());
        assert!(ExperimentConfig::from_json(&BASE.replace("[100]", "[100, 200]")).is_err());
        let sweep = BASE.replace("\"run\"", "\"sweep-n\"").replace("[100]", "[100, 200]");
        assert!(ExperimentConfig::from_json(&sweep).is_ok());
    }

    #[test]
    fn mode_requirements() {
        let linked = BASE.replace("\"run\"", "\"linked-check\"").replace("\"n_grid\"", "\"betas\": [0.5], \"n_grid\"");
        assert!(ExperimentConfig::from_json(&linked).is_err());
        let mixture =
            r#"{"mode": "eos-check", "model": {"type": "gaussian_mixture", "half_width": 3.0}, "n_grid": [100]}"#;
        assert!(ExperimentConfig::from_json(mixture).is_err());
        let oracle_mixture = r#"{"mode": "run", "engine": "oracle", "model": {"type": "gaussian_mixture", "half_width": 3.0}, "n_grid": [100]}"#;
        assert!(ExperimentConfig::from_json(oracle_mixture).is_err());
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        b.master_seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
