use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_training_data, sq_dist, Regressor};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeighting {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbors: usize,
    pub weights: KnnWeighting,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { n_neighbors: 6, weights: KnnWeighting::Distance }
    }
}

impl KnnParams {
    pub const KEYS: &'static [&'static str] = &["n_neighbors", "weights", "leaf_size"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let n_neighbors = hp.usize_or("n_neighbors", 6)?;
        if n_neighbors == 0 {
            return Err(Error::hp("n_neighbors", "must be >= 1"));
        }
        let weights = match hp.text_or("weights", "distance")? {
            "distance" => KnnWeighting::Distance,
            "uniform" => KnnWeighting::Uniform,
            other => return Err(Error::hp("weights", format!("unknown weighting `{other}`"))),
        };
        if hp.get("leaf_size").is_some() {
            log::warn!("k-NN: leaf_size is ignored (exact brute-force search)");
        }
        Ok(Self { n_neighbors, weights })
    }
}

/// Brute-force k-nearest-neighbour regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub features: Array2<f64>,
    pub targets: Vec<f64>,
}

impl KnnModel {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &KnnParams) -> Result<Self> {
        check_training_data(x, y, 1)?;
        if x.nrows() < params.n_neighbors {
            return Err(Error::invalid(format!(
                "k-NN needs at least n_neighbors = {} training rows, got {}",
                params.n_neighbors,
                x.nrows()
            )));
        }
        Ok(Self { params: *params, features: x.to_owned(), targets: y.to_vec() })
    }
}

impl Regressor for KnnModel {
    fn input_width(&self) -> usize {
        self.features.ncols()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .features
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (sq_dist(r, row), i))
            .collect();
        let k = self.params.n_neighbors;
        // (distance, index) order breaks ties at the k-th distance by index
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dist[..k];
        match self.params.weights {
            KnnWeighting::Uniform => nearest.iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / k as f64,
            KnnWeighting::Distance => {
                if nearest.iter().any(|&(d, _)| d == 0.0) {
                    let exact: Vec<f64> = dist
                        .iter()
                        .filter(|(d, _)| *d == 0.0)
                        .map(|&(_, i)| self.targets[i])
                        .collect();
                    return exact.iter().sum::<f64>() / exact.len() as f64;
                }
                let (num, den) = nearest.iter().fold((0.0, 0.0), |(num, den), &(d2, i)| {
                    let w = 1.0 / d2.sqrt();
                    (num + w * self.targets[i], den + w)
                });
                num / den
            }
        }
    }
}
