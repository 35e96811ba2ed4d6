//! k-fold cross-validation and Cartesian grid search.

use std::collections::BTreeMap;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, Metrics};
use crate::error::{Error, Result};
use crate::hyperparams::{HpValue, HyperparameterSet};
use crate::model::{fit_model, validate_hyperparameters, ModelKind};
use crate::preprocess::{apply_preprocessing, PreprocessMode, PreprocessOptions};
use crate::regressors::Regressor;
use crate::rng::{derive_index, derive_seed, SplitMix64};

pub const DEFAULT_FOLDS: usize = 10;

/// Seeded shuffle, then contiguous chunks; the first `n % k` folds are one larger.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Candidate values per hyperparameter for one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub model: ModelKind,
    pub grid: BTreeMap<String, Vec<HpValue>>,
}

impl GridSpec {
    /// Shipped grids bracketing the published values.
    pub fn default_for(model: ModelKind) -> Self {
        let num = |v: &[f64]| v.iter().map(|&x| HpValue::Number(x)).collect::<Vec<_>>();
        let mut grid = BTreeMap::new();
        match model {
            ModelKind::Linear => {}
            ModelKind::Pls => {
                grid.insert("n_components".into(), num(&[5.0, 10.0, 15.0]));
            }
            ModelKind::Rf | ModelKind::Et => {
                grid.insert("n_estimators".into(), num(&[100.0, 500.0, 1000.0]));
            }
            ModelKind::AdaBoost => {
                grid.insert("learning_rate".into(), num(&[1.0, 3.0]));
                grid.insert("n_estimators".into(), num(&[50.0, 150.0]));
            }
            ModelKind::Gb => {
                grid.insert("max_depth".into(), num(&[2.0, 3.0]));
                grid.insert("n_estimators".into(), num(&[100.0, 1000.0]));
            }
            ModelKind::Knn => {
                grid.insert("n_neighbors".into(), num(&[3.0, 6.0, 9.0, 12.0]));
            }
            ModelKind::Svr => {
                grid.insert("C".into(), num(&[1e3, 2.7e4, 1e5]));
                grid.insert("gamma".into(), num(&[1e-4, 1.78e-3, 1e-2]));
            }
            ModelKind::Mlp => {
                grid.insert("epochs".into(), num(&[35.0, 70.0]));
            }
            ModelKind::Som => {
                grid.insert("n_iter_output".into(), num(&[4000.0, 8000.0]));
            }
        }
        Self { model, grid }
    }

    /// Cartesian product; the last key (in sorted order) varies fastest.
    pub fn candidates(&self) -> Vec<HyperparameterSet> {
        let mut out = vec![HyperparameterSet::new()];
        for (key, values) in &self.grid {
            out = out
                .into_iter()
                .flat_map(|hp| values.iter().map(move |v| hp.clone().with(key, v.clone())))
                .collect();
        }
        out
    }

    /// Checks that every list is non-empty and every point is valid on top of `base`.
    pub fn validate(&self, base: &HyperparameterSet) -> Result<()> {
        for (key, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::hp(key, "empty candidate list"));
            }
        }
        for c in self.candidates() {
            validate_hyperparameters(self.model, &base.merged(&c))?;
        }
        Ok(())
    }
}

/// Shared settings of a cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSetup {
    pub mode: PreprocessMode,
    pub preprocess: PreprocessOptions,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub candidate: usize,
    pub hyperparameters: HyperparameterSet,
    pub mean_r2: Option<f64>,
    pub std_r2: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub fold_r2: Vec<f64>,
    /// Why the candidate was disqualified, if it was.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: HyperparameterSet,
    pub best_candidate: usize,
    pub fold_sizes: Vec<usize>,
    pub table: Vec<CvRow>,
}

fn score_fold(
    kind: ModelKind,
    hp: &HyperparameterSet,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    train: &[usize],
    valid: &[usize],
    setup: &CvSetup,
    model_seed: u64,
) -> Result<Metrics> {
    let (tx, ty) = (x.select(Axis(0), train), y.select(Axis(0), train));
    let (vx, vy) = (x.select(Axis(0), valid), y.select(Axis(0), valid));
    let (state, prep) =
        apply_preprocessing(setup.mode, tx.view(), ty.view(), vx.view(), vy.view(), &setup.preprocess)?;
    let model = fit_model(kind, hp, prep.train_x.view(), prep.train_y.view(), model_seed)?;
    let pred = state.inverse_targets(model.predict(prep.test_x.view())?.view())?;
    Metrics::compute(vy.view(), pred.view())
}

/// Fold scores of one hyperparameter set.
pub fn cross_validate(
    kind: ModelKind,
    hp: &HyperparameterSet,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    setup: &CvSetup,
) -> Result<Vec<Metrics>> {
    let folds = kfold_split(x.nrows(), setup.folds, derive_seed(setup.seed, "cv/folds"))?;
    (0..folds.len())
        .into_par_iter()
        .map(|f| run_fold(kind, hp, x, y, &folds, f, setup))
        .collect()
}

fn run_fold(
    kind: ModelKind,
    hp: &HyperparameterSet,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    folds: &[Vec<usize>],
    f: usize,
    setup: &CvSetup,
) -> Result<Metrics> {
    let train: Vec<usize> =
        folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, idx)| idx.iter().copied()).collect();
    let model_seed = derive_index(derive_seed(setup.seed, "cv/model"), f as u64);
    score_fold(kind, hp, x, y, &train, &folds[f], setup, model_seed)
}

/// Mean CV R² per grid point; best = highest mean R², then lowest mean RMSE,
/// then earliest candidate. Points whose fit fails on any fold are disqualified.
pub fn grid_search(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    spec: &GridSpec,
    base: &HyperparameterSet,
    setup: &CvSetup,
) -> Result<GridResult> {
    spec.validate(base)?;
    let folds = kfold_split(x.nrows(), setup.folds, derive_seed(setup.seed, "cv/folds"))?;
    let candidates: Vec<HyperparameterSet> = spec.candidates().iter().map(|c| base.merged(c)).collect();
    let units: Vec<(usize, usize)> =
        (0..candidates.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let scores: Vec<Result<Metrics>> = units
        .par_iter()
        .map(|&(c, f)| run_fold(spec.model, &candidates[c], x, y, &folds, f, setup))
        .collect();

    let mut table = Vec::with_capacity(candidates.len());
    for (c, hp) in candidates.iter().enumerate() {
        let fold_scores = &scores[c * folds.len()..(c + 1) * folds.len()];
        let row = match fold_scores.iter().find_map(|s| s.as_ref().err()) {
            Some(e) => {
                log::warn!("grid point {c} disqualified: {e}");
                CvRow {
                    candidate: c,
                    hyperparameters: hp.clone(),
                    mean_r2: None,
                    std_r2: None,
                    mean_rmse: None,
                    fold_r2: vec![],
                    error: Some(e.to_string()),
                }
            }
            None => {
                let m: Vec<&Metrics> = fold_scores.iter().map(|s| s.as_ref().expect("checked")).collect();
                let r2: Vec<f64> = m.iter().map(|s| s.r_squared).collect();
                let rmse: Vec<f64> = m.iter().map(|s| s.rmse).collect();
                let (mean_r2, std_r2) = mean_std(&r2);
                CvRow {
                    candidate: c,
                    hyperparameters: hp.clone(),
                    mean_r2: Some(mean_r2),
                    std_r2: Some(std_r2),
                    mean_rmse: Some(mean_std(&rmse).0),
                    fold_r2: r2,
                    error: None,
                }
            }
        };
        table.push(row);
    }

    let mut best: Option<&CvRow> = None;
    for row in table.iter().filter(|r| r.error.is_none()) {
        let better = match best {
            None => true,
            Some(b) => {
                let (r, br) = (row.mean_r2.unwrap(), b.mean_r2.unwrap());
                r > br || (r == br && row.mean_rmse.unwrap() < b.mean_rmse.unwrap())
            }
        };
        if better {
            best = Some(row);
        }
    }
    let best = best.ok_or_else(|| Error::Fit("every grid point failed cross-validation".into()))?;
    Ok(GridResult {
        best: best.hyperparameters.clone(),
        best_candidate: best.candidate,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        table: table.clone(),
    })
}

/// `cv_table.csv`: one row per grid point.
pub fn cv_table_csv(table: &[CvRow]) -> String {
    let mut out = String::from("candidate,hyperparameters,mean_r2,std_r2,mean_rmse,status\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in table {
        let hp: Vec<String> = row.hyperparameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let status = match &row.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace(['"', '\n'], " ")),
        };
        out.push_str(&format!(
            "{},\"{}\",{},{},{},\"{}\"\n",
            row.candidate,
            hp.join(" "),
            opt(row.mean_r2),
            opt(row.std_r2),
            opt(row.mean_rmse),
            status
        ));
    }
    out
}
