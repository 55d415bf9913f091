//! Experimental protocol: expanding windows, repeated runs, sweeps,
//! error metrics and reports.

mod config;
mod experiment;
mod metrics;
mod model;
mod pipeline;
mod report;
mod sweep;

use std::path::Path;

use thiserror::Error;

use crate::dataset::DataError;
use crate::deepstack::DeepError;
use crate::network::NetworkError;
use crate::optimizers::TrainError;

pub use config::{
    parse_algorithm, parse_scheme, Config, DataSection, ModelSection, OutputSection, PlanSection,
    RunSection, SweepSection, TrainOverrides,
};
pub use experiment::{
    cell_seed, fit_window, run_experiment, run_experiment_with, run_experiments, with_threads,
    Execution, ExperimentPlan, ExperimentResult, HorizonStats, OverallMetrics, Record, RunSummary,
    ScaledErrors, WindowData,
};
pub use metrics::{mae, mape, rmse, MetricError, Metrics};
pub use model::{DeepSpec, Fitted, Forecaster, ModelSpec, Predictor, TrainedModel};
pub use pipeline::{
    compare_deep_and_classical, run_pipeline, DeepComparison, PipelineOptions, PipelineOutcome,
};
pub use report::{
    manifest_digest, overall_csv, per_horizon_csv, records_csv, sweep_csv, table1_csv,
    write_report, Manifest, ReportFormat, ResultsFile, SeedEntry,
};
pub use sweep::{
    architecture_candidates, compare_rows, rank_rows, sweep_architecture, sweep_optimizer,
    SweepOutcome, SweepRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Deep(#[from] DeepError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results file: {0}")]
    Format(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
