use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_training_data, Regressor};
use crate::error::Result;
use crate::linalg::{from_dvector, lstsq_min_norm, to_dmatrix, to_dvector};

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    /// Fits on centered data so the intercept is exact; the slope is the
    /// minimum-norm least-squares solution, which also covers rank deficiency.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Self> {
        check_training_data(x, y, 1)?;
        let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
        let y_mean = y.mean().expect("non-empty");
        let xc = &x - &x_mean;
        let yc = y.mapv(|v| v - y_mean);
        let w = from_dvector(&lstsq_min_norm(&to_dmatrix(xc.view()), &to_dvector(yc.view()))?);
        let intercept = y_mean - x_mean.dot(&w);
        Ok(Self { weights: w.to_vec(), intercept })
    }
}

impl Regressor for LinearModel {
    fn input_width(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + row.dot(&Array1::from(self.weights.clone()).view())
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        super::check_width(x, self.input_width())?;
        Ok(x.dot(&ArrayView1::from(&self.weights)) + self.intercept)
    }
}
