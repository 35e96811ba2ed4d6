//! Soil-moisture regression from hyperspectral reflectance: dataset handling,
//! preprocessing, ten regressors and the evaluation protocol around them.

pub mod dataset;
pub mod ensembles;
pub mod error;
pub mod evaluation;
pub mod hyperparams;
mod linalg;
pub mod model;
pub mod preprocess;
pub mod regressors;
pub mod rng;
pub mod som;

pub use error::{Error, Result};
pub use model::{fit_model, FittedModel, ModelKind, SavedModel};
