//! Replication harness: reads an experiment config, draws datasets from
//! the truth, computes every criterion per replication, and aggregates
//! means, standard errors and pass/fail checks.

pub mod aggregate;
pub mod config;
pub mod experiment;
pub mod output;

pub use aggregate::{AggregateReport, CellSummary, Check, FieldStat, TrendCheck};
pub use config::{Engine, ExperimentConfig, Mode, ModelConfig};
pub use experiment::{invariant_violations, run_experiment, ExperimentOutput, ReplicationRecord};
pub use output::write_outputs;
