//! Two-stage self-organizing-map regressor: an unsupervised map over the
//! features, then a scalar output map trained on the frozen input map's BMUs.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::regressors::{check_training_data, check_width, Regressor};
use crate::rng::{derive_seed, SplitMix64};

/// Grids smaller than this are updated on the calling thread.
const PAR_MIN_NEURONS: usize = 256;

/// Gaussian weight of a neuron `grid_distance` away from the BMU.
pub fn neighborhood_weight(grid_distance: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("neighborhood radius must be positive, got {radius}")));
    }
    if !(grid_distance >= 0.0) {
        return Err(Error::invalid(format!("grid distance must be non-negative, got {grid_distance}")));
    }
    Ok(gauss(grid_distance * grid_distance, radius))
}

#[inline]
fn gauss(d2: f64, radius: f64) -> f64 {
    (-d2 / (2.0 * radius * radius)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomSchedule {
    pub n_iter_input: usize,
    pub n_iter_output: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// `None` means half the longer grid side.
    pub radius_start: Option<f64>,
    pub radius_end: f64,
}

impl Default for SomSchedule {
    fn default() -> Self {
        Self {
            n_iter_input: 5000,
            n_iter_output: 8000,
            alpha_start: 0.4,
            alpha_end: 0.005,
            radius_start: None,
            radius_end: 1.0,
        }
    }
}

impl SomSchedule {
    /// Both learning rates zero: training leaves every map untouched.
    pub fn frozen() -> Self {
        Self { alpha_start: 0.0, alpha_end: 0.0, ..Self::default() }
    }

    fn is_frozen(&self) -> bool {
        self.alpha_start == 0.0 && self.alpha_end == 0.0
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if !self.is_frozen() && !(self.alpha_start > self.alpha_end && self.alpha_end > 0.0) {
            return Err(Error::hp("alpha_start", "need alpha_start > alpha_end > 0"));
        }
        let r0 = self.radius_start_for(rows, cols);
        if !(self.radius_end >= 1.0 && r0 >= self.radius_end) {
            return Err(Error::hp("radius_start", "need radius_start >= radius_end >= 1"));
        }
        Ok(())
    }

    pub fn radius_start_for(&self, rows: usize, cols: usize) -> f64 {
        self.radius_start.unwrap_or(rows.max(cols) as f64 / 2.0)
    }

    /// `start·(end/start)^(t/T)`.
    pub fn learning_rate(&self, t: usize, total: usize) -> f64 {
        if self.is_frozen() {
            return 0.0;
        }
        decay(self.alpha_start, self.alpha_end, t, total)
    }

    pub fn radius(&self, t: usize, total: usize, rows: usize, cols: usize) -> f64 {
        decay(self.radius_start_for(rows, cols), self.radius_end, t, total)
    }
}

fn decay(start: f64, end: f64, t: usize, total: usize) -> f64 {
    if t >= total {
        return end;
    }
    start * (end / start).powf(t as f64 / total as f64)
}

/// Input map: one weight vector per neuron, neurons stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub rows: usize,
    pub cols: usize,
    /// `(rows·cols) × d`.
    pub weights: Array2<f64>,
}

impl SomGrid {
    pub fn new(rows: usize, cols: usize, weights: Array2<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("SOM grid needs at least one row and one column"));
        }
        if weights.nrows() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: weights.nrows() });
        }
        Ok(Self { rows, cols, weights })
    }

    /// Weights drawn uniformly within each feature's training range.
    pub fn init_uniform(rows: usize, cols: usize, x: ArrayView2<f64>, seed: u64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("cannot initialize a SOM from an empty training set"));
        }
        let d = x.ncols();
        let lo: Vec<f64> = (0..d).map(|j| x.column(j).fold(f64::INFINITY, |a, &b| a.min(b))).collect();
        let hi: Vec<f64> = (0..d).map(|j| x.column(j).fold(f64::NEG_INFINITY, |a, &b| a.max(b))).collect();
        let mut rng = SplitMix64::new(seed);
        let weights = Array2::from_shape_fn((rows * cols, d), |(_, j)| lo[j] + rng.next_f64() * (hi[j] - lo[j]));
        Self::new(rows, cols, weights)
    }

    pub fn n_neurons(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weight(&self, row: usize, col: usize) -> ArrayView1<'_, f64> {
        self.weights.row(row * self.cols + col)
    }

    /// Best-matching unit; ties go to the lowest row, then lowest column.
    pub fn find_bmu(&self, x: ArrayView1<f64>) -> Result<(usize, usize)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let k = self.bmu_index(x);
        Ok((k / self.cols, k % self.cols))
    }

    /// Neuron index of the BMU. Row-major order makes "first minimum" the tie rule.
    fn bmu_index(&self, x: ArrayView1<f64>) -> usize {
        let x = x.to_vec();
        let n = self.n_neurons();
        let best_in = |range: std::ops::Range<usize>| {
            let mut best = (f64::INFINITY, usize::MAX);
            for k in range {
                let w = self.weights.row(k);
                let d: f64 = w.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            best
        };
        if n < PAR_MIN_NEURONS {
            return best_in(0..n).1;
        }
        let chunk = n.div_ceil(rayon::current_num_threads().max(1));
        let parts: Vec<(f64, usize)> = (0..n)
            .step_by(chunk)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|s| best_in(s..(s + chunk).min(n)))
            .collect();
        // chunks are in index order, so strict `<` keeps the first minimum
        parts.into_iter().fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a }).1
    }

    /// Mean Euclidean distance from each row to its BMU.
    pub fn quantization_error(&self, x: ArrayView2<f64>) -> Result<f64> {
        check_width(x, self.dim())?;
        let total: f64 = x
            .rows()
            .into_iter()
            .map(|r| {
                let k = self.bmu_index(r);
                crate::regressors::sq_dist(r, self.weights.row(k)).sqrt()
            })
            .sum();
        Ok(total / x.nrows() as f64)
    }

    fn grid_d2(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = ((a / self.cols) as f64, (a % self.cols) as f64);
        let (rb, cb) = ((b / self.cols) as f64, (b % self.cols) as f64);
        (ra - rb).powi(2) + (ca - cb).powi(2)
    }
}

/// Scalar target estimate per neuron, aligned with [`SomGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSom {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl OutputSom {
    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, values: vec![value; rows * cols] }
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

pub fn fit_input_som(grid: &SomGrid, x: ArrayView2<f64>, schedule: &SomSchedule, seed: u64) -> Result<SomGrid> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    check_width(x, grid.dim())?;
    schedule.validate(grid.rows, grid.cols)?;
    let mut g = grid.clone();
    let total = schedule.n_iter_input;
    let mut rng = SplitMix64::new(seed);
    let d = g.dim();
    for t in 0..total {
        let sample = x.row(rng.below(x.nrows())).to_vec();
        let alpha = schedule.learning_rate(t, total);
        if alpha == 0.0 {
            continue;
        }
        let radius = schedule.radius(t, total, g.rows, g.cols);
        let bmu = g.bmu_index(ArrayView1::from(&sample[..]));
        let cols = g.cols;
        let update = |(k, w): (usize, &mut [f64])| {
            let (dr, dc) = ((k / cols) as f64 - (bmu / cols) as f64, (k % cols) as f64 - (bmu % cols) as f64);
            let step = alpha * gauss(dr * dr + dc * dc, radius);
            for (wj, xj) in w.iter_mut().zip(&sample) {
                *wj += step * (xj - *wj);
            }
        };
        let flat = g.weights.as_slice_mut().expect("standard layout");
        if g.rows * g.cols >= PAR_MIN_NEURONS {
            flat.par_chunks_mut(d).enumerate().for_each(update);
        } else {
            flat.chunks_mut(d).enumerate().for_each(update);
        }
    }
    Ok(g)
}

pub fn fit_output_som(
    grid: &SomGrid,
    output: &OutputSom,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    schedule: &SomSchedule,
    seed: u64,
) -> Result<OutputSom> {
    check_training_data(x, y, 1)?;
    check_width(x, grid.dim())?;
    if output.values.len() != grid.n_neurons() {
        return Err(Error::DimensionMismatch { expected: grid.n_neurons(), got: output.values.len() });
    }
    schedule.validate(grid.rows, grid.cols)?;
    // BMUs on the frozen input map do not change during output training
    let bmus: Vec<usize> = x.rows().into_iter().map(|r| grid.bmu_index(r)).collect();
    let mut out = output.clone();
    let total = schedule.n_iter_output;
    let mut rng = SplitMix64::new(seed);
    for t in 0..total {
        let i = rng.below(x.nrows());
        let alpha = schedule.learning_rate(t, total);
        if alpha == 0.0 {
            continue;
        }
        let radius = schedule.radius(t, total, grid.rows, grid.cols);
        let (bmu, target) = (bmus[i], y[i]);
        for (k, o) in out.values.iter_mut().enumerate() {
            *o += alpha * gauss(grid.grid_d2(k, bmu), radius) * (target - *o);
        }
    }
    Ok(out)
}

pub fn predict_som(grid: &SomGrid, output: &OutputSom, x: ArrayView2<f64>) -> Result<ndarray::Array1<f64>> {
    check_width(x, grid.dim())?;
    Ok(x.rows().into_iter().map(|r| output.values[grid.bmu_index(r)]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    pub rows: usize,
    pub cols: usize,
    pub schedule: SomSchedule,
}

impl Default for SomParams {
    fn default() -> Self {
        Self { rows: 30, cols: 70, schedule: SomSchedule::default() }
    }
}

impl SomParams {
    pub const KEYS: &'static [&'static str] = &[
        "rows",
        "cols",
        "n_iter_input",
        "n_iter_output",
        "alpha_start",
        "alpha_end",
        "radius_start",
        "radius_end",
    ];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let s = d.schedule;
        let radius_start = match hp.get("radius_start") {
            None => None,
            Some(_) => Some(hp.f64_or("radius_start", 0.0)?),
        };
        let p = Self {
            rows: hp.usize_or("rows", d.rows)?,
            cols: hp.usize_or("cols", d.cols)?,
            schedule: SomSchedule {
                n_iter_input: hp.usize_or("n_iter_input", s.n_iter_input)?,
                n_iter_output: hp.usize_or("n_iter_output", s.n_iter_output)?,
                alpha_start: hp.f64_or("alpha_start", s.alpha_start)?,
                alpha_end: hp.f64_or("alpha_end", s.alpha_end)?,
                radius_start,
                radius_end: hp.f64_or("radius_end", s.radius_end)?,
            },
        };
        if p.rows == 0 || p.cols == 0 {
            return Err(Error::hp("rows", "grid sides must be >= 1"));
        }
        p.schedule.validate(p.rows, p.cols)?;
        Ok(p)
    }
}

/// Fitted input map plus its output map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    pub grid: SomGrid,
    pub output: OutputSom,
    pub schedule: SomSchedule,
}

impl SomModel {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &SomParams, seed: u64) -> Result<Self> {
        check_training_data(x, y, 1)?;
        let init = SomGrid::init_uniform(params.rows, params.cols, x, derive_seed(seed, "som/init"))?;
        let grid = fit_input_som(&init, x, &params.schedule, derive_seed(seed, "som/input"))?;
        let mean = y.sum() / y.len() as f64;
        let start = OutputSom::constant(params.rows, params.cols, mean);
        let output = fit_output_som(&grid, &start, x, y, &params.schedule, derive_seed(seed, "som/output"))?;
        Ok(Self { grid, output, schedule: params.schedule })
    }
}

impl Regressor for SomModel {
    fn input_width(&self) -> usize {
        self.grid.dim()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.output.values[self.grid.bmu_index(row)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn far_grid(rows: usize, cols: usize, d: usize) -> SomGrid {
        let w = Array2::from_shape_fn((rows * cols, d), |(k, j)| 100.0 + (k * d + j) as f64);
        SomGrid::new(rows, cols, w).unwrap()
    }

    fn small_params() -> SomParams {
        SomParams {
            rows: 6,
            cols: 10,
            schedule: SomSchedule { n_iter_input: 2000, n_iter_output: 3000, ..SomSchedule::default() },
        }
    }

    #[test]
    fn neighborhood_weight_values() {
        assert_eq!(neighborhood_weight(0.0, 3.0).unwrap(), 1.0);
        assert!((neighborhood_weight(2.5, 2.5).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((neighborhood_weight(2.5, 2.5).unwrap() - 0.6065306597126334).abs() < 1e-15);
        assert!(neighborhood_weight(10.0, 1.0).unwrap() < 1e-21);
        assert!(neighborhood_weight(1.0, 2.0).unwrap() > neighborhood_weight(1.5, 2.0).unwrap());
        assert!(neighborhood_weight(1.0, 0.0).is_err());
        assert!(neighborhood_weight(-1.0, 1.0).is_err());
    }

    #[test]
    fn schedule_hits_endpoints_and_decreases() {
        let s = SomSchedule::default();
        assert_eq!(s.learning_rate(0, 5000), 0.4);
        assert!((s.learning_rate(5000, 5000) - 0.005).abs() < 1e-12);
        assert_eq!(s.radius(0, 5000, 30, 70), 35.0);
        assert!((s.radius(5000, 5000, 30, 70) - 1.0).abs() < 1e-12);
        for t in 0..100 {
            assert!(s.learning_rate(t + 1, 100) < s.learning_rate(t, 100));
            assert!(s.radius(t + 1, 100, 30, 70) < s.radius(t, 100, 30, 70));
        }
    }

    #[test]
    fn schedule_validation() {
        let bad = SomSchedule { alpha_start: 0.001, ..SomSchedule::default() };
        assert!(bad.validate(30, 70).is_err());
        let bad = SomSchedule { radius_end: 0.5, ..SomSchedule::default() };
        assert!(bad.validate(30, 70).is_err());
        assert!(SomSchedule::frozen().validate(30, 70).is_ok());
        assert!(SomParams::from_hp(&HyperparameterSet::new().with("gamma", 1.0)).is_err());
        assert_eq!(SomParams::from_hp(&HyperparameterSet::new()).unwrap(), SomParams::default());
    }

    #[test]
    fn bmu_exact_match() {
        let mut g = far_grid(30, 70, 4);
        let x = array![0.5, -1.0, 2.0, 0.0];
        g.weights.row_mut(3 * 70 + 5).assign(&x);
        assert_eq!(g.find_bmu(x.view()).unwrap(), (3, 5));
        assert!(g.find_bmu(array![1.0].view()).is_err());
    }

    #[test]
    fn bmu_tie_goes_to_lowest_row() {
        let mut g = far_grid(30, 70, 2);
        g.weights.row_mut(2 * 70 + 1).assign(&array![1.0, 0.0]);
        g.weights.row_mut(9).assign(&array![-1.0, 0.0]);
        assert_eq!(g.find_bmu(array![0.0, 0.0].view()).unwrap(), (0, 9));
    }

    #[test]
    fn single_point_collapse() {
        let x = array![[0.3, 0.7, -0.2]];
        let y = array![1.0];
        let init = SomGrid::new(4, 5, Array2::from_shape_fn((20, 3), |(k, j)| (k + j) as f64 * 0.1)).unwrap();
        let s = SomSchedule { n_iter_input: 4000, ..SomSchedule::default() };
        let g = fit_input_som(&init, x.view(), &s, 1).unwrap();
        for w in g.weights.rows() {
            assert!(crate::regressors::sq_dist(w, x.row(0)).sqrt() < 1e-3);
        }
        assert!(g.quantization_error(x.view()).unwrap() < 1e-3);
        let _ = y;
    }

    #[test]
    fn frozen_schedule_changes_nothing() {
        let mut rng = SplitMix64::new(3);
        let x = Array2::from_shape_fn((20, 3), |_| rng.next_f64());
        let y = Array1::from_shape_fn(20, |i| i as f64);
        let init = SomGrid::init_uniform(5, 6, x.view(), 2).unwrap();
        let s = SomSchedule::frozen();
        let g = fit_input_som(&init, x.view(), &s, 1).unwrap();
        assert_eq!(g, init);
        let start = OutputSom::constant(5, 6, 9.5);
        let out = fit_output_som(&g, &start, x.view(), y.view(), &s, 1).unwrap();
        assert_eq!(out, start);
    }

    #[test]
    fn constant_targets_give_constant_output() {
        let mut rng = SplitMix64::new(5);
        let x = Array2::from_shape_fn((30, 2), |_| rng.next_f64());
        let y = Array1::from_elem(30, 4.25);
        let m = SomModel::fit(x.view(), y.view(), &small_params(), 0).unwrap();
        assert!(m.output.values.iter().all(|v| (v - 4.25).abs() < 1e-9));
    }

    #[test]
    fn output_training_leaves_input_map_alone() {
        let mut rng = SplitMix64::new(6);
        let x = Array2::from_shape_fn((25, 3), |_| rng.next_f64());
        let y = x.column(0).to_owned();
        let init = SomGrid::init_uniform(5, 5, x.view(), 1).unwrap();
        let g = fit_input_som(&init, x.view(), &SomSchedule::default(), 2).unwrap();
        let before = serde_json::to_string(&g).unwrap();
        let _ = fit_output_som(&g, &OutputSom::constant(5, 5, 0.5), x.view(), y.view(), &SomSchedule::default(), 3)
            .unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), before);
    }

    #[test]
    fn two_clusters_pull_their_neighbourhoods() {
        let mut rng = SplitMix64::new(7);
        let mut x = Array2::zeros((40, 2));
        let mut y = Array1::zeros(40);
        for i in 0..40 {
            let c = (i % 2) as f64;
            x[[i, 0]] = c * 10.0 + 0.1 * rng.next_f64();
            x[[i, 1]] = c * 10.0 + 0.1 * rng.next_f64();
            y[i] = c;
        }
        let m = SomModel::fit(x.view(), y.view(), &small_params(), 11).unwrap();
        let p = m.predict(x.view()).unwrap();
        for i in 0..40 {
            assert!((p[i] - y[i]).abs() < 0.25, "row {i}: {} vs {}", p[i], y[i]);
        }
        // output values vary monotonically along the line between the two BMUs
        let a = m.grid.bmu_index(x.row(0));
        let b = m.grid.bmu_index(x.row(1));
        assert_ne!(a, b);
        assert!(m.output.values[a] < m.output.values[b]);
    }

    #[test]
    fn predictions_stay_within_target_range_and_match_lookup() {
        let mut rng = SplitMix64::new(8);
        let x = Array2::from_shape_fn((60, 4), |_| rng.next_f64());
        let y = Array1::from_shape_fn(60, |i| x[[i, 0]] * 3.0 - x[[i, 2]]);
        let m = SomModel::fit(x.view(), y.view(), &small_params(), 4).unwrap();
        let q = Array2::from_shape_fn((50, 4), |_| rng.next_f64() * 1.4 - 0.2);
        let p = predict_som(&m.grid, &m.output, q.view()).unwrap();
        let (lo, hi) = (y.fold(f64::INFINITY, |a, &b| a.min(b)), y.fold(f64::NEG_INFINITY, |a, &b| a.max(b)));
        for (row, &v) in q.rows().into_iter().zip(&p) {
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            let (r, c) = m.grid.find_bmu(row).unwrap();
            assert_eq!(v, m.output.value(r, c));
        }
        assert_eq!(p, m.predict(q.view()).unwrap());
    }

    #[test]
    fn training_reduces_quantization_error_and_is_deterministic() {
        let mut rng = SplitMix64::new(9);
        let x = Array2::from_shape_fn((80, 5), |(i, j)| ((i % 4) as f64) + 0.1 * j as f64 + 0.05 * rng.next_f64());
        let init = SomGrid::init_uniform(6, 8, x.view(), 1).unwrap();
        let g = fit_input_som(&init, x.view(), &SomSchedule::default(), 2).unwrap();
        assert!(g.quantization_error(x.view()).unwrap() < init.quantization_error(x.view()).unwrap());
        assert_eq!(g, fit_input_som(&init, x.view(), &SomSchedule::default(), 2).unwrap());
    }
}
