//! Plot-ready tables: predicted-vs-true 2D histogram and the importance spectrum.

use serde::{Deserialize, Serialize};

use crate::dataset::{bin_of, equal_width_edges, BandAxis, Histogram};
use crate::error::{Error, Result};

/// Square 2D histogram; `counts[i][j]` holds rows with truth in bin `i` and
/// prediction in bin `j`. Both axes share `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
}

impl Histogram2d {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Marginal counts over the truth axis.
    pub fn truth_marginal(&self) -> Histogram {
        Histogram { edges: self.edges.clone(), counts: self.counts.iter().map(|r| r.iter().sum()).collect() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_bin_left,true_bin_right,pred_bin_left,pred_bin_right,count\n");
        let e = &self.edges;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{},{},{}\n", e[i], e[i + 1], e[j], e[j + 1], c));
            }
        }
        out
    }
}

pub fn prediction_histogram2d(y_true: &[f64], y_pred: &[f64], n_bins: usize) -> Result<Histogram2d> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch { expected: y_true.len(), got: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(Error::invalid("2D histogram of no values"));
    }
    let all = y_true.iter().chain(y_pred);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = equal_width_edges(lo, hi, n_bins)?;
    let mut counts = vec![vec![0; n_bins]; n_bins];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[bin_of(&edges, t)][bin_of(&edges, p)] += 1;
    }
    Ok(Histogram2d { edges, counts })
}

fn feature_label(axis: &BandAxis, j: usize) -> String {
    match axis.wavelengths().get(j) {
        Some(w) => w.to_string(),
        None => "LWIR".to_string(),
    }
}

fn check_lengths(axis: &BandAxis, lens: &[usize]) -> Result<usize> {
    let expected = axis.wavelengths().len() + 1;
    for &l in lens {
        if l != expected {
            return Err(Error::DimensionMismatch { expected, got: l });
        }
    }
    Ok(expected)
}

/// `importances.csv`: `feature_index,wavelength_nm_or_LWIR,importance`.
pub fn importance_table_csv(importances: &[f64], axis: &BandAxis) -> Result<String> {
    check_lengths(axis, &[importances.len()])?;
    let mut out = String::from("feature_index,wavelength_nm_or_LWIR,importance\n");
    for (j, v) in importances.iter().enumerate() {
        out.push_str(&format!("{j},{},{v}\n", feature_label(axis, j)));
    }
    Ok(out)
}

/// One row per band plus the LWIR row: mean, standard deviation and importance.
pub fn importance_spectrum_export(
    importances: &[f64],
    axis: &BandAxis,
    mean_spectrum: &[f64],
    std_spectrum: &[f64],
) -> Result<String> {
    check_lengths(axis, &[importances.len(), mean_spectrum.len(), std_spectrum.len()])?;
    let mut out = String::from("wavelength_nm_or_LWIR,mean,std,importance\n");
    for j in 0..importances.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            feature_label(axis, j),
            mean_spectrum[j],
            std_spectrum[j],
            importances[j]
        ));
    }
    Ok(out)
}
