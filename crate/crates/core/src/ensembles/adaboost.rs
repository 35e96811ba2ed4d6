//! AdaBoost.R2 with linear loss and weighted-median aggregation.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{MaxFeatures, RegressionTree, SplitMode, TreeParams};
use super::{EnsembleKind, EnsembleModel};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::regressors::check_training_data;
use crate::rng::{derive_index, derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Depth of each base tree.
    pub max_depth: Option<usize>,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { n_estimators: 150, learning_rate: 3.0, max_depth: Some(3) }
    }
}

impl AdaBoostParams {
    pub const KEYS: &'static [&'static str] = &["n_estimators", "learning_rate", "loss", "max_depth"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let loss = hp.text_or("loss", "linear")?;
        if loss != "linear" {
            return Err(Error::hp("loss", format!("only `linear` is supported, got `{loss}`")));
        }
        let p = Self {
            n_estimators: hp.usize_or("n_estimators", d.n_estimators)?,
            learning_rate: hp.positive_f64_or("learning_rate", d.learning_rate)?,
            max_depth: hp.opt_usize_or("max_depth", d.max_depth)?,
        };
        if p.n_estimators == 0 {
            return Err(Error::hp("n_estimators", "must be >= 1"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// A learner fitted the training data exactly.
    PerfectFit,
    /// Average loss reached 0.5.
    WeakLearnerTooWeak,
}

/// Per-round diagnostics of an AdaBoost.R2 fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostTrace {
    pub average_loss: Vec<f64>,
    /// Sum of the sample-weight vector after each round's renormalization.
    pub weight_sums: Vec<f64>,
    pub stop: StopReason,
}

/// Smallest prediction whose cumulative weight reaches half of the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for &k in &order {
        cum += weights[k];
        if cum >= 0.5 * total {
            return values[k];
        }
    }
    values[*order.last().expect("non-empty")]
}

pub fn fit_adaboost_r2(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &AdaBoostParams,
    seed: u64,
) -> Result<EnsembleModel> {
    fit_adaboost_r2_traced(x, y, params, seed).map(|(m, _)| m)
}

pub fn fit_adaboost_r2_traced(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &AdaBoostParams,
    seed: u64,
) -> Result<(EnsembleModel, AdaBoostTrace)> {
    check_training_data(x, y, 2)?;
    let n = x.nrows();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: 2,
        split_mode: SplitMode::Exhaustive,
        max_features: MaxFeatures::All,
    };
    let mut sample_rng = SplitMix64::new(derive_seed(seed, "adaboost/resample"));
    let mut weights = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut tree_weights = Vec::new();
    let mut trace = AdaBoostTrace { average_loss: vec![], weight_sums: vec![], stop: StopReason::Completed };

    for round in 0..params.n_estimators {
        let idx = weighted_bootstrap(&weights, &mut sample_rng);
        let mut tree_rng = SplitMix64::new(derive_index(seed, round as u64));
        let tree = RegressionTree::fit(x, y, &idx, &tree_params, &mut tree_rng);
        let errors: Vec<f64> = x
            .rows()
            .into_iter()
            .zip(y.iter())
            .map(|(row, &t)| (tree.predict_row(row) - t).abs())
            .collect();
        let max_err = errors
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .fold(0.0f64, |m, (&e, _)| m.max(e));
        if max_err == 0.0 {
            trees.push(tree);
            tree_weights.push(1.0);
            trace.average_loss.push(0.0);
            trace.stop = StopReason::PerfectFit;
            break;
        }
        let losses: Vec<f64> = errors.iter().map(|e| e / max_err).collect();
        let avg: f64 = losses.iter().zip(&weights).map(|(l, w)| l * w).sum();
        trace.average_loss.push(avg);
        if avg >= 0.5 {
            if trees.is_empty() {
                // keep one learner so the model is usable
                trees.push(tree);
                tree_weights.push(1.0);
            }
            trace.stop = StopReason::WeakLearnerTooWeak;
            break;
        }
        let beta = avg / (1.0 - avg);
        trees.push(tree);
        tree_weights.push(params.learning_rate * (1.0 / beta).ln());

        for (w, l) in weights.iter_mut().zip(&losses) {
            if *w > 0.0 {
                *w *= beta.powf((1.0 - l) * params.learning_rate);
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            log::warn!("AdaBoost: sample weights degenerated after round {round}; stopping");
            break;
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        trace.weight_sums.push(weights.iter().sum());
    }

    let model = EnsembleModel {
        kind: EnsembleKind::AdaBoost,
        trees,
        tree_weights,
        init: 0.0,
        learning_rate: 1.0,
        n_features: x.ncols(),
    };
    Ok((model, trace))
}

/// `n` indices drawn with replacement proportionally to `weights`.
fn weighted_bootstrap(weights: &[f64], rng: &mut SplitMix64) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let total = acc;
    (0..weights.len())
        .map(|_| {
            let u = rng.next_f64() * total;
            cdf.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}
