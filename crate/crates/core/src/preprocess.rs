//! Optional second pipeline stage: PCA projection or min-max scaling.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, symmetric_eigen_sorted, to_dmatrix};

pub const DEFAULT_PCA_COMPONENTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreprocessMode {
    None,
    Pca,
    Scaling,
}

impl fmt::Display for PreprocessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreprocessMode::None => "none",
            PreprocessMode::Pca => "pca",
            PreprocessMode::Scaling => "scaling",
        })
    }
}

impl FromStr for PreprocessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PreprocessMode::None),
            "pca" => Ok(PreprocessMode::Pca),
            "scaling" | "minmax" => Ok(PreprocessMode::Scaling),
            other => Err(Error::invalid(format!(
                "unknown preprocessing mode `{other}` (expected none, pca or scaling)"
            ))),
        }
    }
}

/// Centered PCA (no whitening).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components x d`, one principal direction per row.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Fits the top `n_components` directions of the sample covariance.
    pub fn fit(x: ArrayView2<f64>, n_components: usize) -> Result<Self> {
        let (n, d) = x.dim();
        if n_components == 0 || n_components > d {
            return Err(Error::invalid(format!(
                "n_components must be in 1..={d}, got {n_components}"
            )));
        }
        if n <= n_components {
            return Err(Error::invalid(format!(
                "PCA needs more rows ({n}) than components ({n_components})"
            )));
        }
        ensure_finite(x, "PCA input")?;

        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        let (values, vectors) = symmetric_eigen_sorted(to_dmatrix(cov.view()))?;

        let components = Array2::from_shape_fn((n_components, d), |(k, j)| vectors[(j, k)]);
        let explained_variance = values[..n_components].iter().map(|v| v.max(0.0)).collect();
        Ok(Self {
            mean: mean.to_vec(),
            components,
            explained_variance,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    /// Projects rows onto the principal directions: `(x - mean) * components^T`.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.input_width())?;
        let centered = &x - &ArrayView1::from(&self.mean);
        Ok(centered.dot(&self.components.t()))
    }

    /// Maps scores back to feature space: `scores * components + mean`.
    pub fn inverse_transform(&self, scores: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(scores, self.n_components())?;
        Ok(scores.dot(&self.components) + &ArrayView1::from(&self.mean))
    }
}

/// Per-column min/max over the feature columns plus the target column (last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Self> {
        let (n, d) = x.dim();
        if n == 0 {
            return Err(Error::invalid("min-max scaling of an empty matrix"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        ensure_finite(x, "scaling input")?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("scaling targets contain non-finite values"));
        }
        let mut feature_min = Vec::with_capacity(d + 1);
        let mut feature_max = Vec::with_capacity(d + 1);
        for col in x.columns().into_iter().chain(std::iter::once(y)) {
            feature_min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            feature_max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Self { feature_min, feature_max })
    }

    pub fn input_width(&self) -> usize {
        self.feature_min.len() - 1
    }

    fn target_index(&self) -> usize {
        self.feature_min.len() - 1
    }

    fn scale(&self, j: usize, v: f64) -> f64 {
        let range = self.feature_max[j] - self.feature_min[j];
        if range > 0.0 {
            (v - self.feature_min[j]) / range
        } else {
            0.0
        }
    }

    /// Fitted target range `max - min`.
    pub fn target_range(&self) -> f64 {
        let t = self.target_index();
        self.feature_max[t] - self.feature_min[t]
    }

    /// Scales feature columns; no clipping is applied.
    pub fn transform_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.input_width())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| self.scale(j, v));
        }
        Ok(out)
    }

    pub fn transform_targets(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let t = self.target_index();
        y.mapv(|v| self.scale(t, v))
    }

    /// Inverse of [`transform_features`](Self::transform_features) on non-constant columns.
    pub fn inverse_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.input_width())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.feature_min[j], self.feature_max[j]);
            col.mapv_inplace(|v| v * (hi - lo) + lo);
        }
        Ok(out)
    }

    /// Maps scaled targets back to original units.
    pub fn inverse_targets(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let t = self.target_index();
        let (lo, hi) = (self.feature_min[t], self.feature_max[t]);
        if hi <= lo {
            return Err(Error::invalid(
                "cannot invert target scaling: fitted target column is constant",
            ));
        }
        Ok(y.mapv(|v| v * (hi - lo) + lo))
    }
}

/// Fitted preprocessing stage. Exactly the model matching `mode` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessorState {
    mode: PreprocessMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pca: Option<PcaModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<MinMaxScaler>,
}

impl PreprocessorState {
    pub fn identity() -> Self {
        Self { mode: PreprocessMode::None, pca: None, scaler: None }
    }

    pub fn with_pca(model: PcaModel) -> Self {
        Self { mode: PreprocessMode::Pca, pca: Some(model), scaler: None }
    }

    pub fn with_scaler(scaler: MinMaxScaler) -> Self {
        Self { mode: PreprocessMode::Scaling, pca: None, scaler: Some(scaler) }
    }

    /// Fits the stage for `mode` on the given rows.
    pub fn fit(
        mode: PreprocessMode,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        n_components: usize,
    ) -> Result<Self> {
        Ok(match mode {
            PreprocessMode::None => Self::identity(),
            PreprocessMode::Pca => Self::with_pca(PcaModel::fit(x, n_components)?),
            PreprocessMode::Scaling => Self::with_scaler(MinMaxScaler::fit(x, y)?),
        })
    }

    pub fn mode(&self) -> PreprocessMode {
        self.mode
    }

    pub fn pca(&self) -> Option<&PcaModel> {
        self.pca.as_ref()
    }

    pub fn scaler(&self) -> Option<&MinMaxScaler> {
        self.scaler.as_ref()
    }

    /// Checks the mode/model pairing (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let ok = match self.mode {
            PreprocessMode::None => self.pca.is_none() && self.scaler.is_none(),
            PreprocessMode::Pca => self.pca.is_some() && self.scaler.is_none(),
            PreprocessMode::Scaling => self.pca.is_none() && self.scaler.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "preprocessor state for mode `{}` carries the wrong fitted model",
                self.mode
            )))
        }
    }

    pub fn transform_features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self.mode {
            PreprocessMode::None => Ok(x.to_owned()),
            PreprocessMode::Pca => self.pca.as_ref().expect("validated").transform(x),
            PreprocessMode::Scaling => self.scaler.as_ref().expect("validated").transform_features(x),
        }
    }

    /// Targets in model space. Only scaling touches them.
    pub fn transform_targets(&self, y: ArrayView1<f64>) -> Array1<f64> {
        match &self.scaler {
            Some(s) => s.transform_targets(y),
            None => y.to_owned(),
        }
    }

    /// Model-space predictions back in original target units.
    pub fn inverse_targets(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        match &self.scaler {
            Some(s) => s.inverse_targets(y),
            None => Ok(y.to_owned()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        state.validate()?;
        Ok(state)
    }
}

/// Train and test arrays after the preprocessing stage.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train_x: Array2<f64>,
    pub train_y: Array1<f64>,
    pub test_x: Array2<f64>,
    pub test_y: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    pub n_components: usize,
    /// Fit statistics on train and test rows together (leaks test statistics).
    pub fit_on_all: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { n_components: DEFAULT_PCA_COMPONENTS, fit_on_all: false }
    }
}

/// Fits the stage on the training rows and applies it to both subsets.
pub fn apply_preprocessing(
    mode: PreprocessMode,
    train_x: ArrayView2<f64>,
    train_y: ArrayView1<f64>,
    test_x: ArrayView2<f64>,
    test_y: ArrayView1<f64>,
    options: &PreprocessOptions,
) -> Result<(PreprocessorState, Prepared)> {
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::DimensionMismatch { expected: train_x.ncols(), got: test_x.ncols() });
    }
    let state = if options.fit_on_all {
        let x = ndarray::concatenate(Axis(0), &[train_x, test_x])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let y = ndarray::concatenate(Axis(0), &[train_y, test_y])
            .map_err(|e| Error::invalid(e.to_string()))?;
        PreprocessorState::fit(mode, x.view(), y.view(), options.n_components)?
    } else {
        PreprocessorState::fit(mode, train_x, train_y, options.n_components)?
    };
    let prepared = Prepared {
        train_x: state.transform_features(train_x)?,
        train_y: state.transform_targets(train_y),
        test_x: state.transform_features(test_x)?,
        test_y: state.transform_targets(test_y),
    };
    Ok((state, prepared))
}

fn check_width(x: ArrayView2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.ncols() });
    }
    Ok(())
}
