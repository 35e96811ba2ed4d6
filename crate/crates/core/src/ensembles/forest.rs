use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{MaxFeatures, RegressionTree, SplitMode, TreeParams};
use super::{EnsembleKind, EnsembleModel};
use crate::error::{Error, Result};
use crate::hyperparams::{HpValue, HyperparameterSet};
use crate::regressors::check_training_data;
use crate::rng::{derive_index, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    /// Resample rows with replacement per tree (random forest only).
    pub bootstrap: bool,
}

impl ForestParams {
    pub const KEYS: &'static [&'static str] =
        &["n_estimators", "max_depth", "min_samples_split", "max_features", "bootstrap"];

    pub fn random_forest() -> Self {
        Self {
            n_estimators: 1000,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Third,
            bootstrap: true,
        }
    }

    pub fn extra_trees() -> Self {
        Self { bootstrap: false, ..Self::random_forest() }
    }

    pub fn from_hp(hp: &HyperparameterSet, defaults: Self) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let p = Self {
            n_estimators: hp.usize_or("n_estimators", defaults.n_estimators)?,
            max_depth: hp.opt_usize_or("max_depth", defaults.max_depth)?,
            min_samples_split: hp.usize_or("min_samples_split", defaults.min_samples_split)?,
            max_features: parse_max_features(hp, defaults.max_features)?,
            bootstrap: hp.bool_or("bootstrap", defaults.bootstrap)?,
        };
        if p.n_estimators == 0 {
            return Err(Error::hp("n_estimators", "must be >= 1"));
        }
        if p.min_samples_split < 2 {
            return Err(Error::hp("min_samples_split", "must be >= 2"));
        }
        Ok(p)
    }
}

fn parse_max_features(hp: &HyperparameterSet, default: MaxFeatures) -> Result<MaxFeatures> {
    match hp.get("max_features") {
        None => Ok(default),
        Some(HpValue::Text(t)) => match t.as_str() {
            "all" => Ok(MaxFeatures::All),
            "third" => Ok(MaxFeatures::Third),
            other => Err(Error::hp("max_features", format!("unknown value `{other}`"))),
        },
        Some(HpValue::Number(_)) => {
            let k = hp.usize_or("max_features", 1)?;
            if k == 0 {
                return Err(Error::hp("max_features", "must be >= 1"));
            }
            Ok(MaxFeatures::Count(k))
        }
        Some(other) => Err(Error::hp("max_features", format!("unexpected value `{other}`"))),
    }
}

fn fit_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    split_mode: SplitMode,
    kind: EnsembleKind,
    seed: u64,
) -> Result<EnsembleModel> {
    check_training_data(x, y, 2)?;
    let n = x.nrows();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        split_mode,
        max_features: params.max_features,
    };
    let trees: Vec<RegressionTree> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::new(derive_index(seed, t as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(x, y, &idx, &tree_params, &mut rng)
        })
        .collect();
    Ok(EnsembleModel {
        kind,
        tree_weights: vec![1.0; trees.len()],
        trees,
        init: 0.0,
        learning_rate: 1.0,
        n_features: x.ncols(),
    })
}

/// Bootstrap-aggregated exhaustive CART trees with per-node feature subsampling.
pub fn fit_random_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Result<EnsembleModel> {
    fit_forest(x, y, params, SplitMode::Exhaustive, EnsembleKind::RandomForest, seed)
}

/// Extremely randomized trees: whole sample, one random threshold per candidate feature.
pub fn fit_extra_trees(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Result<EnsembleModel> {
    fit_forest(x, y, params, SplitMode::RandomThreshold, EnsembleKind::ExtraTrees, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::Regressor;
    use ndarray::{Array1, Array2};

    fn data(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = SplitMix64::new(seed);
        let x = Array2::from_shape_fn((n, 4), |_| rng.next_f64());
        let y = Array1::from_shape_fn(n, |i| (6.0 * x[[i, 0]]).sin() + x[[i, 1]]);
        (x, y)
    }

    #[test]
    fn single_tree_without_bootstrap_equals_cart() {
        let (x, y) = data(50, 1);
        let p = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..ForestParams::random_forest()
        };
        let rf = fit_random_forest(x.view(), y.view(), &p, 7).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let cart = RegressionTree::fit(
            x.view(),
            y.view(),
            &idx,
            &TreeParams::default(),
            &mut SplitMix64::new(0),
        );
        assert_eq!(rf.trees[0], cart);
        // memorization
        assert_eq!(rf.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn constant_targets_predict_constant() {
        let (x, _) = data(30, 2);
        let y = Array1::from_elem(30, 4.5);
        let p = ForestParams { n_estimators: 10, ..ForestParams::random_forest() };
        for m in [
            fit_random_forest(x.view(), y.view(), &p, 1).unwrap(),
            fit_extra_trees(x.view(), y.view(), &p, 1).unwrap(),
        ] {
            assert!(m.predict(x.view()).unwrap().iter().all(|&v| v == 4.5));
            assert!(m.feature_importance().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn extra_trees_deterministic() {
        let (x, y) = data(80, 3);
        let p = ForestParams { n_estimators: 20, ..ForestParams::extra_trees() };
        let a = fit_extra_trees(x.view(), y.view(), &p, 11).unwrap();
        let b = fit_extra_trees(x.view(), y.view(), &p, 11).unwrap();
        assert_eq!(a, b);
        let c = fit_extra_trees(x.view(), y.view(), &p, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn predictions_within_target_range() {
        let (x, y) = data(60, 4);
        let (q, _) = data(40, 5);
        let q = q.mapv(|v| v * 3.0 - 1.0);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = ForestParams { n_estimators: 15, ..ForestParams::random_forest() };
        for m in [
            fit_random_forest(x.view(), y.view(), &p, 1).unwrap(),
            fit_extra_trees(x.view(), y.view(), &p, 1).unwrap(),
        ] {
            for v in m.predict(q.view()).unwrap() {
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn bootstrap_leaf_counts_sum_to_n() {
        let (x, y) = data(45, 6);
        let p = ForestParams { n_estimators: 5, ..ForestParams::random_forest() };
        let rf = fit_random_forest(x.view(), y.view(), &p, 2).unwrap();
        for t in &rf.trees {
            assert_eq!(t.nodes[0].n_samples(), 45);
        }
    }

    #[test]
    fn hyperparameters() {
        let hp = HyperparameterSet::new().with("n_estimators", 5usize).with("max_features", "all");
        let p = ForestParams::from_hp(&hp, ForestParams::random_forest()).unwrap();
        assert_eq!(p.n_estimators, 5);
        assert_eq!(p.max_features, MaxFeatures::All);
        assert!(ForestParams::from_hp(
            &HyperparameterSet::new().with("n_estimators", 0usize),
            ForestParams::random_forest()
        )
        .is_err());
        assert_eq!(ForestParams::random_forest().n_estimators, 1000);
    }
}
