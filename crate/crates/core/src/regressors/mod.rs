//! Non-tree regression models: least squares, PLS, k-NN, epsilon-SVR and a
//! dense feed-forward network.

mod knn;
mod linear;
mod mlp;
mod pls;
mod svr;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub use knn::{KnnModel, KnnParams, KnnWeighting};
pub use linear::LinearModel;
pub use mlp::{MlpModel, MlpParams};
pub use pls::{PlsModel, PlsParams};
pub use svr::{SvrModel, SvrParams};

/// Common prediction interface of every fitted model.
pub trait Regressor {
    /// Feature width seen at fit time.
    fn input_width(&self) -> usize;

    fn predict_row(&self, row: ArrayView1<f64>) -> f64;

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.input_width())?;
        let out: Array1<f64> = x.rows().into_iter().map(|r| self.predict_row(r)).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("non-finite prediction for row {i}")));
        }
        Ok(out)
    }
}

pub(crate) fn check_width(x: ArrayView2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.ncols() });
    }
    Ok(())
}

/// Shape and finiteness checks shared by every `fit`.
pub(crate) fn check_training_data(x: ArrayView2<f64>, y: ArrayView1<f64>, min_rows: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() < min_rows {
        return Err(Error::invalid(format!(
            "need at least {min_rows} training rows, got {}",
            x.nrows()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("training matrix has no columns"));
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(())
}

/// Squared Euclidean distance between two rows.
#[inline]
pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}
