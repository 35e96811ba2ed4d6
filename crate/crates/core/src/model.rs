//! Model registry: kind names, default hyperparameters, fit dispatch and the
//! JSON container used to save fitted models.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ensembles::{
    fit_adaboost_r2, fit_extra_trees, fit_gradient_boosting, fit_random_forest, AdaBoostParams, EnsembleModel,
    ForestParams, GbParams,
};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::regressors::{
    KnnModel, KnnParams, LinearModel, MlpModel, MlpParams, PlsModel, PlsParams, Regressor, SvrModel, SvrParams,
};
use crate::som::{SomModel, SomParams};

/// Bumped whenever the saved-model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Pls,
    Rf,
    Et,
    AdaBoost,
    Gb,
    Knn,
    Svr,
    Mlp,
    Som,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Linear,
        ModelKind::Pls,
        ModelKind::Rf,
        ModelKind::Et,
        ModelKind::AdaBoost,
        ModelKind::Gb,
        ModelKind::Knn,
        ModelKind::Svr,
        ModelKind::Mlp,
        ModelKind::Som,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Pls => "pls",
            ModelKind::Rf => "rf",
            ModelKind::Et => "et",
            ModelKind::AdaBoost => "adaboost",
            ModelKind::Gb => "gb",
            ModelKind::Knn => "knn",
            ModelKind::Svr => "svr",
            ModelKind::Mlp => "mlp",
            ModelKind::Som => "som",
        }
    }

    pub fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            ModelKind::Linear => &[],
            ModelKind::Pls => PlsParams::KEYS,
            ModelKind::Rf | ModelKind::Et => ForestParams::KEYS,
            ModelKind::AdaBoost => AdaBoostParams::KEYS,
            ModelKind::Gb => GbParams::KEYS,
            ModelKind::Knn => KnnParams::KEYS,
            ModelKind::Svr => SvrParams::KEYS,
            ModelKind::Mlp => MlpParams::KEYS,
            ModelKind::Som => SomParams::KEYS,
        }
    }

    /// The published setup for each model; keys the table leaves open are omitted.
    pub fn default_hyperparameters(self) -> HyperparameterSet {
        let hp = HyperparameterSet::new();
        match self {
            ModelKind::Linear => hp,
            ModelKind::Pls => hp.with("n_components", 10usize).with("max_iter", 100usize).with("tol", 1e-7),
            ModelKind::Rf | ModelKind::Et => hp.with("n_estimators", 1000usize),
            ModelKind::AdaBoost => {
                hp.with("learning_rate", 3.0).with("loss", "linear").with("n_estimators", 150usize)
            }
            ModelKind::Gb => hp
                .with("learning_rate", 0.1)
                .with("loss", "huber")
                .with("n_estimators", 1000usize)
                .with("max_depth", 2usize),
            ModelKind::Knn => hp.with("n_neighbors", 6usize).with("weights", "distance"),
            ModelKind::Svr => hp.with("C", 26827.0).with("gamma", 0.00178),
            ModelKind::Mlp => hp
                .with("epochs", 70usize)
                .with("batch_size", 8usize)
                .with("hidden_layers", vec![64usize, 128, 64, 32]),
            ModelKind::Som => hp
                .with("rows", 30usize)
                .with("cols", 70usize)
                .with("n_iter_input", 5000usize)
                .with("n_iter_output", 8000usize)
                .with("alpha_start", 0.4)
                .with("alpha_end", 0.005),
        }
    }

    pub fn has_importances(self) -> bool {
        matches!(self, ModelKind::Rf | ModelKind::Et | ModelKind::AdaBoost | ModelKind::Gb)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::invalid(format!("unknown model kind `{s}`")))
    }
}

/// Every fitted model behind one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "lowercase")]
pub enum FittedModel {
    Linear(LinearModel),
    Pls(PlsModel),
    Rf(EnsembleModel),
    Et(EnsembleModel),
    AdaBoost(EnsembleModel),
    Gb(EnsembleModel),
    Knn(KnnModel),
    Svr(SvrModel),
    Mlp(MlpModel),
    Som(SomModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Linear(_) => ModelKind::Linear,
            FittedModel::Pls(_) => ModelKind::Pls,
            FittedModel::Rf(_) => ModelKind::Rf,
            FittedModel::Et(_) => ModelKind::Et,
            FittedModel::AdaBoost(_) => ModelKind::AdaBoost,
            FittedModel::Gb(_) => ModelKind::Gb,
            FittedModel::Knn(_) => ModelKind::Knn,
            FittedModel::Svr(_) => ModelKind::Svr,
            FittedModel::Mlp(_) => ModelKind::Mlp,
            FittedModel::Som(_) => ModelKind::Som,
        }
    }

    fn as_regressor(&self) -> &dyn Regressor {
        match self {
            FittedModel::Linear(m) => m,
            FittedModel::Pls(m) => m,
            FittedModel::Rf(m) | FittedModel::Et(m) | FittedModel::AdaBoost(m) | FittedModel::Gb(m) => m,
            FittedModel::Knn(m) => m,
            FittedModel::Svr(m) => m,
            FittedModel::Mlp(m) => m,
            FittedModel::Som(m) => m,
        }
    }

    pub fn ensemble(&self) -> Option<&EnsembleModel> {
        match self {
            FittedModel::Rf(m) | FittedModel::Et(m) | FittedModel::AdaBoost(m) | FittedModel::Gb(m) => Some(m),
            _ => None,
        }
    }

    /// Impurity importances; an error for models without trees.
    pub fn feature_importance(&self) -> Result<Vec<f64>> {
        self.ensemble()
            .map(EnsembleModel::feature_importance)
            .ok_or_else(|| Error::invalid(format!("model kind `{}` has no importances", self.kind())))
    }
}

impl Regressor for FittedModel {
    fn input_width(&self) -> usize {
        self.as_regressor().input_width()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.as_regressor().predict_row(row)
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<ndarray::Array1<f64>> {
        self.as_regressor().predict(x)
    }
}

/// Fits `kind` with `hp` (validated against the kind's keys) on `(x, y)`.
pub fn fit_model(
    kind: ModelKind,
    hp: &HyperparameterSet,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    seed: u64,
) -> Result<FittedModel> {
    Ok(match kind {
        ModelKind::Linear => {
            hp.check_keys(&[])?;
            FittedModel::Linear(LinearModel::fit(x, y)?)
        }
        ModelKind::Pls => FittedModel::Pls(PlsModel::fit(x, y, &PlsParams::from_hp(hp)?)?),
        ModelKind::Rf => {
            let p = ForestParams::from_hp(hp, ForestParams::random_forest())?;
            FittedModel::Rf(fit_random_forest(x, y, &p, seed)?)
        }
        ModelKind::Et => {
            let p = ForestParams::from_hp(hp, ForestParams::extra_trees())?;
            FittedModel::Et(fit_extra_trees(x, y, &p, seed)?)
        }
        ModelKind::AdaBoost => FittedModel::AdaBoost(fit_adaboost_r2(x, y, &AdaBoostParams::from_hp(hp)?, seed)?),
        ModelKind::Gb => FittedModel::Gb(fit_gradient_boosting(x, y, &GbParams::from_hp(hp)?, seed)?),
        ModelKind::Knn => FittedModel::Knn(KnnModel::fit(x, y, &KnnParams::from_hp(hp)?)?),
        ModelKind::Svr => FittedModel::Svr(SvrModel::fit(x, y, &SvrParams::from_hp(hp)?)?),
        ModelKind::Mlp => FittedModel::Mlp(MlpModel::fit(x, y, &MlpParams::from_hp(hp)?, seed)?),
        ModelKind::Som => FittedModel::Som(SomModel::fit(x, y, &SomParams::from_hp(hp)?, seed)?),
    })
}

/// Validates `hp` for `kind` without fitting.
pub fn validate_hyperparameters(kind: ModelKind, hp: &HyperparameterSet) -> Result<()> {
    match kind {
        ModelKind::Linear => hp.check_keys(&[]),
        ModelKind::Pls => PlsParams::from_hp(hp).map(drop),
        ModelKind::Rf => ForestParams::from_hp(hp, ForestParams::random_forest()).map(drop),
        ModelKind::Et => ForestParams::from_hp(hp, ForestParams::extra_trees()).map(drop),
        ModelKind::AdaBoost => AdaBoostParams::from_hp(hp).map(drop),
        ModelKind::Gb => GbParams::from_hp(hp).map(drop),
        ModelKind::Knn => KnnParams::from_hp(hp).map(drop),
        ModelKind::Svr => SvrParams::from_hp(hp).map(drop),
        ModelKind::Mlp => MlpParams::from_hp(hp).map(drop),
        ModelKind::Som => SomParams::from_hp(hp).map(drop),
    }
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub hyperparameters: HyperparameterSet,
    pub feature_width: usize,
    pub seed: u64,
    pub model: FittedModel,
}

impl SavedModel {
    pub fn new(model: FittedModel, hyperparameters: HyperparameterSet, seed: u64) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            hyperparameters,
            feature_width: model.input_width(),
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: Self = serde_json::from_str(text)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                saved.format_version
            )));
        }
        if saved.feature_width != saved.model.input_width() {
            return Err(Error::DimensionMismatch { expected: saved.feature_width, got: saved.model.input_width() });
        }
        Ok(saved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use ndarray::{Array1, Array2};

    fn toy() -> (Array2<f64>, Array1<f64>) {
        let mut rng = SplitMix64::new(1);
        let x = Array2::from_shape_fn((40, 3), |_| rng.next_f64());
        let y = Array1::from_shape_fn(40, |i| 2.0 * x[[i, 0]] - x[[i, 2]] + 1.0);
        (x, y)
    }

    fn light(kind: ModelKind) -> HyperparameterSet {
        let hp = HyperparameterSet::new();
        match kind {
            ModelKind::Pls => hp.with("n_components", 2usize),
            ModelKind::Rf | ModelKind::Et | ModelKind::Gb => hp.with("n_estimators", 10usize),
            ModelKind::AdaBoost => hp.with("n_estimators", 5usize),
            ModelKind::Svr => hp.with("C", 10.0).with("gamma", 0.5),
            ModelKind::Mlp => hp.with("epochs", 2usize).with("hidden_layers", vec![4usize]),
            ModelKind::Som => hp
                .with("rows", 3usize)
                .with("cols", 4usize)
                .with("n_iter_input", 50usize)
                .with("n_iter_output", 50usize),
            _ => hp,
        }
    }

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("xgboost".parse::<ModelKind>().is_err());
        assert_eq!("ET".parse::<ModelKind>().unwrap(), ModelKind::Et);
    }

    #[test]
    fn published_defaults_validate() {
        for k in ModelKind::ALL {
            let hp = k.default_hyperparameters();
            validate_hyperparameters(k, &hp).unwrap_or_else(|e| panic!("{k}: {e}"));
            for (key, _) in hp.iter() {
                assert!(k.allowed_keys().contains(&key.as_str()), "{k}: {key}");
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected_for_every_kind() {
        for k in ModelKind::ALL {
            let hp = HyperparameterSet::new().with("bogus", 1.0);
            assert!(validate_hyperparameters(k, &hp).is_err(), "{k}");
        }
    }

    #[test]
    fn every_kind_fits_saves_and_reloads() {
        let (x, y) = toy();
        for k in ModelKind::ALL {
            let hp = light(k);
            let m = fit_model(k, &hp, x.view(), y.view(), 3).unwrap_or_else(|e| panic!("{k}: {e}"));
            assert_eq!(m.kind(), k);
            let p = m.predict(x.view()).unwrap();
            assert!(p.iter().all(|v| v.is_finite()));
            let text = SavedModel::new(m.clone(), hp, 3).to_json().unwrap();
            let back = SavedModel::from_json(&text).unwrap();
            assert_eq!(back.model, m, "{k}");
            assert_eq!(back.model.predict(x.view()).unwrap(), p);
            assert_eq!(m.feature_importance().is_ok(), k.has_importances());
        }
    }

    #[test]
    fn empty_matrix_gives_empty_predictions() {
        let (x, y) = toy();
        let m = fit_model(ModelKind::Linear, &HyperparameterSet::new(), x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict(Array2::zeros((0, 3)).view()).unwrap().len(), 0);
        assert!(m.predict(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn corrupted_documents_are_rejected() {
        assert!(SavedModel::from_json("{\"format_version\": 1").is_err());
        let (x, y) = toy();
        let m = fit_model(ModelKind::Linear, &HyperparameterSet::new(), x.view(), y.view(), 0).unwrap();
        let mut saved = SavedModel::new(m, HyperparameterSet::new(), 0);
        saved.feature_width = 7;
        assert!(SavedModel::from_json(&saved.to_json().unwrap()).is_err());
    }
}
