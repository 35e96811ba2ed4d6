//! Multi-seed experiment orchestration and the report it produces.

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cv_table_csv, grid_search, CvRow, CvSetup, GridSpec, DEFAULT_FOLDS};
use super::metrics::{mean_std, rmse, Metrics};
use super::plots::{importance_table_csv, prediction_histogram2d, Histogram2d};
use crate::dataset::{split_indices, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::model::{fit_model, FittedModel, ModelKind, SavedModel};
use crate::preprocess::{apply_preprocessing, PreprocessMode, PreprocessOptions, PreprocessorState};
use crate::regressors::Regressor;
use crate::rng::derive_seed;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED_COUNT: usize = 7;
pub const DEFAULT_TRAIN_COUNT: usize = 641;
pub const DEFAULT_TEST_COUNT: usize = 691;
pub const DEFAULT_HIST_BINS: usize = 20;

/// `count` consecutive seeds starting at `base`.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base + i).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub hyperparameters: HyperparameterSet,
    /// When present, each seed's hyperparameters come from a grid search on its training subset.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub preprocess: PreprocessMode,
    pub n_components: usize,
    /// `None` uses 641/691 on a 1332-row dataset and the same proportion otherwise.
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub seeds: Vec<u64>,
    /// Draw a fresh train/test split per seed instead of reusing the first seed's.
    pub resplit_per_seed: bool,
    pub cv_folds: usize,
    pub hist_bins: usize,
    /// Worker cap; never affects results, so it stays out of the report.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Et,
            hyperparameters: HyperparameterSet::new(),
            grid: None,
            preprocess: PreprocessMode::None,
            n_components: crate::preprocess::DEFAULT_PCA_COMPONENTS,
            train_count: None,
            test_count: None,
            seeds: seed_list(1, DEFAULT_SEED_COUNT),
            resplit_per_seed: true,
            cv_folds: DEFAULT_FOLDS,
            hist_bins: DEFAULT_HIST_BINS,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.hist_bins == 0 {
            return Err(Error::invalid("hist_bins must be positive"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be positive"));
        }
        match &self.grid {
            Some(g) => {
                if g.model != self.model {
                    return Err(Error::invalid(format!(
                        "grid is for model `{}` but the experiment uses `{}`",
                        g.model, self.model
                    )));
                }
                g.validate(&self.hyperparameters)
            }
            None => crate::model::validate_hyperparameters(self.model, &self.hyperparameters),
        }
    }

    /// Train/test sizes for a dataset of `n` rows.
    pub fn split_counts(&self, n: usize) -> Result<(usize, usize)> {
        let total = DEFAULT_TRAIN_COUNT + DEFAULT_TEST_COUNT;
        let (train, test) = match (self.train_count, self.test_count) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, n.saturating_sub(a)),
            (None, Some(b)) => (n.saturating_sub(b), b),
            (None, None) => {
                let a = ((n * DEFAULT_TRAIN_COUNT) as f64 / total as f64).round() as usize;
                (a, n - a)
            }
        };
        if train + test != n {
            return Err(Error::invalid(format!("split {train} + {test} does not match the {n} dataset rows")));
        }
        Ok((train, test))
    }
}

/// Runs `f` on a pool capped at `jobs` workers (the global pool when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {j} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub hyperparameters: HyperparameterSet,
    pub train: Metrics,
    pub test: Metrics,
    /// Test RMSE in scaled target units; present only under scaling.
    pub test_rmse_scaled: Option<f64>,
    pub test_record_ids: Vec<u64>,
    pub test_true: Vec<f64>,
    pub test_pred: Vec<f64>,
    pub importances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub train_r2_mean: f64,
    pub train_r2_std: f64,
    pub train_rmse_mean: f64,
    pub train_rmse_std: f64,
    pub test_r2_mean: f64,
    pub test_r2_std: f64,
    pub test_rmse_mean: f64,
    pub test_rmse_std: f64,
    pub test_rmse_scaled_mean: Option<f64>,
    pub test_rmse_scaled_std: Option<f64>,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedReport]) -> Self {
        let col = |f: &dyn Fn(&SeedReport) -> f64| mean_std(&seeds.iter().map(f).collect::<Vec<_>>());
        let (train_r2_mean, train_r2_std) = col(&|s| s.train.r_squared);
        let (train_rmse_mean, train_rmse_std) = col(&|s| s.train.rmse);
        let (test_r2_mean, test_r2_std) = col(&|s| s.test.r_squared);
        let (test_rmse_mean, test_rmse_std) = col(&|s| s.test.rmse);
        let scaled: Option<Vec<f64>> = seeds.iter().map(|s| s.test_rmse_scaled).collect();
        let (sm, ss) = match scaled {
            Some(v) => {
                let (m, s) = mean_std(&v);
                (Some(m), Some(s))
            }
            None => (None, None),
        };
        Self {
            train_r2_mean,
            train_r2_std,
            train_rmse_mean,
            train_rmse_std,
            test_r2_mean,
            test_r2_std,
            test_rmse_mean,
            test_rmse_std,
            test_rmse_scaled_mean: sm,
            test_rmse_scaled_std: ss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Aggregate,
    /// Mean of per-seed importances, renormalized; tree ensembles only.
    pub importances: Option<Vec<f64>>,
    /// Test predictions of the first seed.
    pub hist2d: Option<Histogram2d>,
    /// Grid-search table of the first seed, when a grid was searched.
    pub cv_table: Option<Vec<CvRow>>,
}

/// Fitted artifacts of one seed, kept out of the report.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub model: SavedModel,
    pub preprocessor: PreprocessorState,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: RegressionReport,
    pub artifacts: Vec<SeedArtifacts>,
}

struct SeedRun {
    report: SeedReport,
    artifacts: SeedArtifacts,
    cv_table: Option<Vec<CvRow>>,
}

fn run_seed(config: &ExperimentConfig, data: &Dataset, seed: u64, split_seed: u64) -> Result<SeedRun> {
    let (train_count, test_count) = config.split_counts(data.len())?;
    let (train_idx, test_idx) =
        split_indices(data.len(), &SplitSpec { train_count, test_count, seed: derive_seed(split_seed, "split") })?;
    let (x, y) = data.assemble_features()?;
    let (tx, ty) = (x.select(Axis(0), &train_idx), y.select(Axis(0), &train_idx));
    let (vx, vy) = (x.select(Axis(0), &test_idx), y.select(Axis(0), &test_idx));
    let options = PreprocessOptions { n_components: config.n_components, fit_on_all: false };

    let (hp, cv_table) = match &config.grid {
        Some(spec) => {
            let setup =
                CvSetup { mode: config.preprocess, preprocess: options, folds: config.cv_folds, seed: derive_seed(seed, "cv") };
            let result = grid_search(tx.view(), ty.view(), spec, &config.hyperparameters, &setup)?;
            (result.best, Some(result.table))
        }
        None => (config.hyperparameters.clone(), None),
    };

    let (state, prep) = apply_preprocessing(config.preprocess, tx.view(), ty.view(), vx.view(), vy.view(), &options)?;
    let model = fit_model(config.model, &hp, prep.train_x.view(), prep.train_y.view(), derive_seed(seed, "model"))?;
    let train_scaled = model.predict(prep.train_x.view())?;
    let test_scaled = model.predict(prep.test_x.view())?;
    let train_pred = state.inverse_targets(train_scaled.view())?;
    let test_pred = state.inverse_targets(test_scaled.view())?;
    let test_rmse_scaled = match config.preprocess {
        PreprocessMode::Scaling => Some(rmse(prep.test_y.view(), test_scaled.view())?),
        _ => None,
    };
    let importances = model.ensemble().map(|e| e.feature_importance());
    let report = SeedReport {
        seed,
        hyperparameters: hp.clone(),
        train: Metrics::compute(ty.view(), train_pred.view())?,
        test: Metrics::compute(vy.view(), test_pred.view())?,
        test_rmse_scaled,
        test_record_ids: test_idx.iter().map(|&i| data.samples()[i].record_id).collect(),
        test_true: vy.to_vec(),
        test_pred: test_pred.to_vec(),
        importances,
    };
    Ok(SeedRun {
        report,
        artifacts: SeedArtifacts { seed, model: SavedModel::new(model, hp, seed), preprocessor: state },
        cv_table,
    })
}

/// Split, preprocess, (optionally grid-search), fit and score once per seed.
pub fn run_experiment(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutcome> {
    config.validate()?;
    config.split_counts(data.len())?;
    let runs: Vec<SeedRun> = with_jobs(config.jobs, || {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let split_seed = if config.resplit_per_seed { seed } else { config.seeds[0] };
                run_seed(config, data, seed, split_seed).map_err(|e| match e {
                    Error::Fit(m) => Error::Fit(format!("seed {seed}: {m}")),
                    Error::InvalidInput(m) => Error::InvalidInput(format!("seed {seed}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let per_seed: Vec<SeedReport> = runs.iter().map(|r| r.report.clone()).collect();
    let importances = mean_importances(&per_seed);
    let first = &per_seed[0];
    let hist2d = Some(prediction_histogram2d(&first.test_true, &first.test_pred, config.hist_bins)?);
    let report = RegressionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        aggregate: Aggregate::from_seeds(&per_seed),
        per_seed,
        importances,
        hist2d,
        cv_table: runs[0].cv_table.clone(),
    };
    Ok(ExperimentOutcome { report, artifacts: runs.into_iter().map(|r| r.artifacts).collect() })
}

fn mean_importances(seeds: &[SeedReport]) -> Option<Vec<f64>> {
    let all: Vec<&Vec<f64>> = seeds.iter().map(|s| s.importances.as_ref()).collect::<Option<_>>()?;
    let mut mean = vec![0.0; all[0].len()];
    for imp in &all {
        for (m, v) in mean.iter_mut().zip(imp.iter()) {
            *m += v;
        }
    }
    let total: f64 = mean.iter().sum();
    if total > 0.0 {
        mean.iter_mut().for_each(|v| *v /= total);
    }
    Some(mean)
}

impl RegressionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("seed,train_r2,train_rmse,test_r2,test_rmse,test_rmse_scaled,n_train,n_test\n");
        for s in &self.per_seed {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.seed,
                s.train.r_squared,
                s.train.rmse,
                s.test.r_squared,
                s.test.rmse,
                s.test_rmse_scaled.map(|v| v.to_string()).unwrap_or_default(),
                s.train.n,
                s.test.n
            ));
        }
        out
    }

    /// Every report file as `(file name, contents)`, ready to be written together.
    pub fn files(&self, axis: &crate::dataset::BandAxis) -> Result<Vec<(String, String)>> {
        let mut files = vec![
            ("report.json".to_string(), self.to_json()?),
            ("per_seed_metrics.csv".to_string(), self.per_seed_csv()),
        ];
        if let Some(t) = &self.cv_table {
            files.push(("cv_table.csv".to_string(), cv_table_csv(t)));
        }
        if let Some(imp) = &self.importances {
            // PCA features are components, not bands; index them plainly
            let csv = if imp.len() == axis.wavelengths().len() + 1 {
                importance_table_csv(imp, axis)?
            } else {
                let mut s = String::from("feature_index,wavelength_nm_or_LWIR,importance\n");
                for (j, v) in imp.iter().enumerate() {
                    s.push_str(&format!("{j},,{v}\n"));
                }
                s
            };
            files.push(("importances.csv".to_string(), csv));
        }
        if let Some(h) = &self.hist2d {
            files.push(("hist2d.csv".to_string(), h.to_csv()));
        }
        Ok(files)
    }
}

/// Model-space predictions of a saved model on raw features, mapped back to target units.
pub fn predict_with(model: &FittedModel, state: &PreprocessorState, x: ndarray::ArrayView2<f64>) -> Result<ndarray::Array1<f64>> {
    let z = state.transform_features(x)?;
    let p = model.predict(z.view())?;
    state.inverse_targets(p.view())
}
