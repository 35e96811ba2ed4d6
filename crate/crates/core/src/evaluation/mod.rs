//! Metrics, cross-validated grid search, multi-seed experiments and report export.

mod cv;
mod experiment;
mod metrics;
mod plots;

pub use cv::{cross_validate, cv_table_csv, grid_search, kfold_split, CvRow, CvSetup, GridResult, GridSpec, DEFAULT_FOLDS};
pub use experiment::{
    predict_with, run_experiment, seed_list, with_jobs, Aggregate, ExperimentConfig, ExperimentOutcome,
    RegressionReport, SeedArtifacts, SeedReport, DEFAULT_HIST_BINS, DEFAULT_SEED_COUNT, DEFAULT_TEST_COUNT,
    DEFAULT_TRAIN_COUNT, REPORT_SCHEMA_VERSION,
};
pub use metrics::{mean_std, r_squared, rmse, Metrics};
pub use plots::{importance_spectrum_export, importance_table_csv, prediction_histogram2d, Histogram2d};
