//! Stage-wise gradient boosting of shallow CARTs under Huber loss.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{MaxFeatures, RegressionTree, SplitMode, TreeNode, TreeParams};
use super::{EnsembleKind, EnsembleModel};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::regressors::check_training_data;
use crate::rng::{derive_index, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbLoss {
    Huber,
    /// Squared error; kept for comparisons in tests.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub loss: GbLoss,
    /// Quantile of absolute residuals used as the Huber transition point.
    pub alpha: f64,
}

impl Default for GbParams {
    fn default() -> Self {
        Self { n_estimators: 1000, max_depth: 2, learning_rate: 0.1, loss: GbLoss::Huber, alpha: 0.9 }
    }
}

impl GbParams {
    pub const KEYS: &'static [&'static str] = &["n_estimators", "max_depth", "learning_rate", "loss", "alpha"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let loss = match hp.text_or("loss", "huber")? {
            "huber" => GbLoss::Huber,
            "squared_error" => GbLoss::Squared,
            other => return Err(Error::hp("loss", format!("unknown loss `{other}`"))),
        };
        let p = Self {
            n_estimators: hp.usize_or("n_estimators", d.n_estimators)?,
            max_depth: hp.usize_or("max_depth", d.max_depth)?,
            learning_rate: hp.f64_or("learning_rate", d.learning_rate)?,
            loss,
            alpha: hp.f64_or("alpha", d.alpha)?,
        };
        if p.learning_rate < 0.0 {
            return Err(Error::hp("learning_rate", "must be >= 0"));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(Error::hp("alpha", "must lie in (0, 1)"));
        }
        Ok(p)
    }
}

/// Training loss before and after each stage, both measured at that stage's delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbTrace {
    pub loss_before: Vec<f64>,
    pub loss_after: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Mean Huber loss of residuals with transition point `delta`.
pub fn huber_loss(residuals: &[f64], delta: f64) -> f64 {
    let total: f64 = residuals
        .iter()
        .map(|r| {
            let a = r.abs();
            if a <= delta { 0.5 * r * r } else { delta * (a - 0.5 * delta) }
        })
        .sum();
    total / residuals.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Order statistic at rank `ceil(q·n)` (1-based).
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

pub fn fit_gradient_boosting(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &GbParams,
    seed: u64,
) -> Result<EnsembleModel> {
    fit_gradient_boosting_traced(x, y, params, seed).map(|(m, _)| m)
}

pub fn fit_gradient_boosting_traced(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &GbParams,
    seed: u64,
) -> Result<(EnsembleModel, GbTrace)> {
    check_training_data(x, y, 2)?;
    let n = x.nrows();
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: 2,
        split_mode: SplitMode::Exhaustive,
        max_features: MaxFeatures::All,
    };
    let all: Vec<usize> = (0..n).collect();
    let init = median(&y.to_vec());
    let mut f = Array1::from_elem(n, init);
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut trace = GbTrace { loss_before: vec![], loss_after: vec![], deltas: vec![] };

    for stage in 0..params.n_estimators {
        let resid: Vec<f64> = y.iter().zip(f.iter()).map(|(t, p)| t - p).collect();
        let (grad, delta) = match params.loss {
            GbLoss::Squared => (resid.clone(), f64::INFINITY),
            GbLoss::Huber => {
                let abs: Vec<f64> = resid.iter().map(|r| r.abs()).collect();
                let delta = quantile(&abs, params.alpha);
                let g = resid.iter().map(|&r| if r.abs() <= delta { r } else { delta * r.signum() }).collect();
                (g, delta)
            }
        };
        let grad = Array1::from(grad);
        // exhaustive splits over all features never consume the stream
        let mut rng = SplitMix64::new(derive_index(seed, stage as u64));
        let mut tree = RegressionTree::fit(x, grad.view(), &all, &tree_params, &mut rng);

        let leaf_of: Vec<usize> = x.rows().into_iter().map(|r| tree.leaf_index(r)).collect();
        if params.loss == GbLoss::Huber {
            let leaves: Vec<usize> = (0..tree.nodes.len())
                .filter(|&k| matches!(tree.nodes[k], TreeNode::Leaf { .. }))
                .collect();
            for leaf in leaves {
                let r: Vec<f64> = (0..n).filter(|&i| leaf_of[i] == leaf).map(|i| resid[i]).collect();
                if r.is_empty() {
                    continue;
                }
                let med = median(&r);
                let corr = r.iter().map(|&v| (v - med).signum() * (v - med).abs().min(delta)).sum::<f64>()
                    / r.len() as f64;
                tree.set_leaf_value(leaf, med + corr);
            }
        }

        let huber_delta = if delta.is_finite() { delta } else { f64::MAX };
        trace.loss_before.push(huber_loss(&resid, huber_delta));
        for (i, fi) in f.iter_mut().enumerate() {
            if let TreeNode::Leaf { value, .. } = tree.nodes[leaf_of[i]] {
                *fi += params.learning_rate * value;
            }
        }
        let after: Vec<f64> = y.iter().zip(f.iter()).map(|(t, p)| t - p).collect();
        trace.loss_after.push(huber_loss(&after, huber_delta));
        trace.deltas.push(delta);
        trees.push(tree);
    }

    let model = EnsembleModel {
        kind: EnsembleKind::GradientBoosting,
        tree_weights: vec![1.0; trees.len()],
        trees,
        init,
        learning_rate: params.learning_rate,
        n_features: x.ncols(),
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::Regressor;
    use ndarray::Array2;

    fn data(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = SplitMix64::new(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.next_f64());
        let y = Array1::from_shape_fn(n, |i| 3.0 * (4.0 * x[[i, 0]]).sin() + x[[i, 1]] + 0.2 * rng.next_f64());
        (x, y)
    }

    #[test]
    fn huber_loss_pieces() {
        assert_eq!(huber_loss(&[0.5], 1.0), 0.125);
        assert_eq!(huber_loss(&[-3.0], 1.0), 2.5);
        assert_eq!(huber_loss(&[1.0, -3.0], 1.0), 1.5);
    }

    #[test]
    fn median_and_quantile() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 0.95), 10.0);
    }

    #[test]
    fn zero_stages_predict_the_median() {
        let (x, y) = data(21, 1);
        let p = GbParams { n_estimators: 0, ..GbParams::default() };
        let m = fit_gradient_boosting(x.view(), y.view(), &p, 0).unwrap();
        let med = median(&y.to_vec());
        assert!(m.predict(x.view()).unwrap().iter().all(|&v| v == med));
    }

    #[test]
    fn zero_shrinkage_keeps_the_initial_constant() {
        let (x, y) = data(30, 2);
        let p = GbParams { n_estimators: 20, learning_rate: 0.0, ..GbParams::default() };
        let m = fit_gradient_boosting(x.view(), y.view(), &p, 0).unwrap();
        assert!(m.predict(x.view()).unwrap().iter().all(|&v| v == m.init));
    }

    #[test]
    fn single_squared_stage_is_median_plus_shrunk_residual_tree() {
        let (x, y) = data(50, 3);
        let p = GbParams { n_estimators: 1, loss: GbLoss::Squared, ..GbParams::default() };
        let m = fit_gradient_boosting(x.view(), y.view(), &p, 0).unwrap();
        let med = median(&y.to_vec());
        let resid = y.mapv(|v| v - med);
        let all: Vec<usize> = (0..50).collect();
        let tp = TreeParams {
            max_depth: Some(2),
            min_samples_split: 2,
            split_mode: SplitMode::Exhaustive,
            max_features: MaxFeatures::All,
        };
        let tree = RegressionTree::fit(x.view(), resid.view(), &all, &tp, &mut SplitMix64::new(0));
        for row in x.rows() {
            let expect = med + 0.1 * tree.predict_row(row);
            assert!((m.predict_row(row) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn huber_training_loss_does_not_increase() {
        let (x, y) = data(200, 4);
        let p = GbParams { n_estimators: 100, ..GbParams::default() };
        let (_, trace) = fit_gradient_boosting_traced(x.view(), y.view(), &p, 0).unwrap();
        for (b, a) in trace.loss_before.iter().zip(&trace.loss_after) {
            assert!(a <= &(b + 1e-12), "{a} > {b}");
        }
    }

    #[test]
    fn huber_is_less_sensitive_to_an_outlier_than_squared_error() {
        let (x, y) = data(200, 5);
        let mut dirty = y.clone();
        dirty[17] += 100.0;
        let probe = x.row(40);
        let shift = |loss| {
            let p = GbParams { n_estimators: 50, loss, ..GbParams::default() };
            let clean = fit_gradient_boosting(x.view(), y.view(), &p, 0).unwrap();
            let corrupt = fit_gradient_boosting(x.view(), dirty.view(), &p, 0).unwrap();
            (clean.predict_row(probe) - corrupt.predict_row(probe)).abs()
        };
        assert!(shift(GbLoss::Huber) < shift(GbLoss::Squared));
    }

    #[test]
    fn hyperparameter_parsing() {
        let p = GbParams::from_hp(&HyperparameterSet::new()).unwrap();
        assert_eq!(p, GbParams::default());
        assert!(GbParams::from_hp(&HyperparameterSet::new().with("loss", "quantile")).is_err());
        assert!(GbParams::from_hp(&HyperparameterSet::new().with("alpha", 1.0)).is_err());
    }
}
