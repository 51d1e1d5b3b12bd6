//! Experiment orchestration: configuration, the runner, bounded random
//! hyperparameter search, cost profiling, and report emission.

mod config;
pub mod fixtures;
mod profile;
mod report;
mod runner;
mod search;

pub use config::{
    DatasetConfig, DatasetSourceKind, EstimatorConfig, EstimatorMode, ExperimentConfig,
    MethodConfig, MethodKind, PerturbConfig, PerturbKind, SearchSettings, TasksConfig,
    SEED_ENV_VAR,
};
pub use profile::{profile, CostSample};
pub use report::{
    parse_results_csv, read_results_json, report_markdown, results_csv, write_report,
    ReportFiles, ReportFormat, ALL_FORMATS, CSV_HEADER,
};
pub use runner::{
    build_base_dataset, run_experiment, search_method, split_students, train_method, ReportRow,
    RowStatus, SeedOutcome, StudentSplit,
};
pub use search::{random_search, Assignment, SearchOutcome, SearchSpace, SpaceSpec, TrialResult};

use thiserror::Error;

use crate::core::CoreError;
use crate::data::DataError;
use crate::metrics::MetricsError;
use crate::rec::RecError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rec(#[from] RecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    BadFile { path: String, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("no completed search trials within the budget")]
    NoTrials,
}
