use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_training_data, Regressor};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlsParams {
    pub n_components: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PlsParams {
    fn default() -> Self {
        Self { n_components: 10, max_iter: 100, tol: 1e-7 }
    }
}

impl PlsParams {
    pub const KEYS: &'static [&'static str] = &["n_components", "max_iter", "tol"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            n_components: hp.usize_or("n_components", d.n_components)?,
            max_iter: hp.usize_or("max_iter", d.max_iter)?,
            tol: hp.positive_f64_or("tol", d.tol)?,
        };
        if p.n_components == 0 {
            return Err(Error::hp("n_components", "must be >= 1"));
        }
        if p.max_iter == 0 {
            return Err(Error::hp("max_iter", "must be >= 1"));
        }
        Ok(p)
    }
}

/// Single-target PLS fitted by NIPALS with X and y deflation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
    /// `d x a` weight vectors, one per column.
    pub x_weights: Array2<f64>,
    /// `d x a` loadings.
    pub x_loadings: Array2<f64>,
    pub y_loadings: Vec<f64>,
    /// Regression coefficients on centered inputs.
    pub coef: Vec<f64>,
}

impl PlsModel {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &PlsParams) -> Result<Self> {
        check_training_data(x, y, 2)?;
        let (n, d) = x.dim();
        let budget = (n - 1).min(d);
        let mut a = params.n_components;
        if a > budget {
            log::warn!("PLS: {a} components exceed rank budget {budget}; truncating");
            a = budget;
        }

        let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
        let y_mean = y.mean().expect("non-empty");
        let mut xk = &x - &x_mean;
        let mut yk = y.mapv(|v| v - y_mean);
        let scale = xk.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

        let mut weights = Vec::new();
        let mut loadings = Vec::new();
        let mut y_loadings = Vec::new();
        for comp in 0..a {
            let Some(w) = nipals_weight(&xk, &yk, params, scale) else {
                log::warn!("PLS: data exhausted after {comp} components; truncating");
                break;
            };
            let t = xk.dot(&w);
            let tt = t.dot(&t);
            if tt <= f64::EPSILON * scale * scale {
                log::warn!("PLS: degenerate score at component {comp}; truncating");
                break;
            }
            let p = xk.t().dot(&t) / tt;
            let q = yk.dot(&t) / tt;
            // deflate
            for (i, mut row) in xk.rows_mut().into_iter().enumerate() {
                row.scaled_add(-t[i], &p);
            }
            yk.scaled_add(-q, &t);
            weights.push(w);
            loadings.push(p);
            y_loadings.push(q);
        }
        if weights.is_empty() {
            // no covariance between X and y: predict the mean
            return Ok(Self {
                x_mean: x_mean.to_vec(),
                y_mean,
                x_weights: Array2::zeros((d, 0)),
                x_loadings: Array2::zeros((d, 0)),
                y_loadings: vec![],
                coef: vec![0.0; d],
            });
        }

        let k = weights.len();
        let x_weights = Array2::from_shape_fn((d, k), |(j, c)| weights[c][j]);
        let x_loadings = Array2::from_shape_fn((d, k), |(j, c)| loadings[c][j]);
        // rotations W (P^T W)^-1, coef = rotations q
        let ptw = x_loadings.t().dot(&x_weights);
        let inv = DMatrix::from_fn(k, k, |i, j| ptw[[i, j]])
            .try_inverse()
            .ok_or_else(|| Error::Fit("PLS: singular P^T W".into()))?;
        let inv = Array2::from_shape_fn((k, k), |(i, j)| inv[(i, j)]);
        let coef = x_weights.dot(&inv).dot(&Array1::from(y_loadings.clone()));
        Ok(Self {
            x_mean: x_mean.to_vec(),
            y_mean,
            x_weights,
            x_loadings,
            y_loadings,
            coef: coef.to_vec(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.y_loadings.len()
    }
}

/// Power iteration for the first X weight vector against the deflated target.
fn nipals_weight(
    x: &Array2<f64>,
    y: &Array1<f64>,
    params: &PlsParams,
    scale: f64,
) -> Option<Array1<f64>> {
    let mut y_score = y.clone();
    if y_score.dot(&y_score) <= f64::EPSILON * scale {
        return None;
    }
    let mut w_old: Option<Array1<f64>> = None;
    for _ in 0..params.max_iter {
        let mut w = x.t().dot(&y_score) / y_score.dot(&y_score);
        let norm = w.dot(&w).sqrt();
        if !(norm > f64::EPSILON * scale) {
            return None;
        }
        w /= norm;
        let t = x.dot(&w);
        let y_weight = y.dot(&t) / t.dot(&t);
        y_score = y / y_weight;
        if let Some(old) = &w_old {
            let diff = &w - old;
            if diff.dot(&diff) < params.tol {
                return Some(w);
            }
        }
        w_old = Some(w);
    }
    w_old
}

impl Regressor for PlsModel {
    fn input_width(&self) -> usize {
        self.x_mean.len()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.y_mean
            + row
                .iter()
                .zip(&self.x_mean)
                .zip(&self.coef)
                .map(|((v, m), c)| (v - m) * c)
                .sum::<f64>()
    }
}
