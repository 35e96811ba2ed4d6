//! Tree ensembles: random forest, extremely randomized trees, AdaBoost.R2 and
//! Huber gradient boosting, plus impurity-based feature importances.

mod adaboost;
mod forest;
mod gboost;
mod tree;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::regressors::Regressor;

pub use adaboost::{fit_adaboost_r2, fit_adaboost_r2_traced, weighted_median, AdaBoostParams, AdaBoostTrace, StopReason};
pub use forest::{fit_extra_trees, fit_random_forest, ForestParams};
pub use gboost::{fit_gradient_boosting, fit_gradient_boosting_traced, huber_loss, GbLoss, GbParams, GbTrace};
pub use tree::{MaxFeatures, RegressionTree, SplitMode, TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    RandomForest,
    ExtraTrees,
    AdaBoost,
    GradientBoosting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub trees: Vec<RegressionTree>,
    /// AdaBoost learner weights; uniform ones for the other kinds.
    pub tree_weights: Vec<f64>,
    /// Gradient boosting starting constant (0 for the other kinds).
    pub init: f64,
    /// Gradient boosting shrinkage (1 for the other kinds).
    pub learning_rate: f64,
    pub n_features: usize,
}

impl EnsembleModel {
    /// Mean of per-tree normalized importances (weighted by learner weight
    /// for AdaBoost), renormalized to sum 1. All zero when no tree splits.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for (tree, &w) in self.trees.iter().zip(&self.tree_weights) {
            for (acc, v) in total.iter_mut().zip(tree.feature_importance()) {
                *acc += w * v;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        total
    }
}

impl Regressor for EnsembleModel {
    fn input_width(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        match self.kind {
            EnsembleKind::RandomForest | EnsembleKind::ExtraTrees => {
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
            }
            EnsembleKind::AdaBoost => {
                let preds: Vec<f64> = self.trees.iter().map(|t| t.predict_row(row)).collect();
                weighted_median(&preds, &self.tree_weights)
            }
            EnsembleKind::GradientBoosting => {
                self.init
                    + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
            }
        }
    }
}
