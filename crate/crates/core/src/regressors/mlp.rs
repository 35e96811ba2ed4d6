//! Dense feed-forward network: ReLU hidden layers, linear output, MSE loss,
//! mini-batch Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_training_data, check_width, Regressor};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden_layers: vec![64, 128, 64, 32], epochs: 70, batch_size: 8, learning_rate: 1e-3 }
    }
}

impl MlpParams {
    pub const KEYS: &'static [&'static str] = &["hidden_layers", "epochs", "batch_size", "learning_rate"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let p = Self {
            hidden_layers: hp.usize_list_or("hidden_layers", &d.hidden_layers)?,
            epochs: hp.usize_or("epochs", d.epochs)?,
            batch_size: hp.usize_or("batch_size", d.batch_size)?,
            learning_rate: hp.positive_f64_or("learning_rate", d.learning_rate)?,
        };
        if p.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::hp("hidden_layers", "layer widths must be >= 1"));
        }
        if p.batch_size == 0 {
            return Err(Error::hp("batch_size", "must be >= 1"));
        }
        Ok(p)
    }
}

/// One dense layer: `out = in * weights + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-layer gradients, same shapes as [`Dense`].
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

impl MlpModel {
    /// Network with all weights and biases zero.
    pub fn zeros(input_width: usize, hidden: &[usize]) -> Self {
        let widths = layer_widths(input_width, hidden);
        let layers = widths
            .windows(2)
            .map(|w| Dense { weights: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers, loss_history: vec![] }
    }

    /// Uniform fan-in initialization, limit `sqrt(6 / fan_in)`, zero biases.
    pub fn init(input_width: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut model = Self::zeros(input_width, hidden);
        for layer in &mut model.layers {
            let limit = (6.0 / layer.weights.nrows() as f64).sqrt();
            layer.weights.mapv_inplace(|_| (2.0 * rng.next_f64() - 1.0) * limit);
        }
        model
    }

    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &MlpParams, seed: u64) -> Result<Self> {
        check_training_data(x, y, params.batch_size.max(1))?;
        let n = x.nrows();
        let mut model = Self::init(x.ncols(), &params.hidden_layers, derive_seed(seed, "mlp/init"));
        let mut shuffle_rng = SplitMix64::new(derive_seed(seed, "mlp/shuffle"));
        let mut adam = Adam::new(&model.layers, params.learning_rate);
        let mut order: Vec<usize> = (0..n).collect();

        for epoch in 0..params.epochs {
            shuffle_rng.shuffle(&mut order);
            let mut total = 0.0;
            for (b, chunk) in order.chunks(params.batch_size).enumerate() {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let (loss, grads) = model.loss_and_gradients(xb.view(), yb.view());
                if !loss.is_finite() {
                    return Err(Error::Fit(format!(
                        "MLP loss became non-finite at epoch {epoch}, batch {b} (loss = {loss})"
                    )));
                }
                total += loss * chunk.len() as f64;
                adam.step(&mut model.layers, &grads);
            }
            model.loss_history.push(total / n as f64);
        }
        Ok(model)
    }

    /// Forward pass keeping pre-activations (`z`) and activations (`a`, with the input first).
    fn forward_cache(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut acts = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let z = acts[k].dot(&layer.weights) + &layer.bias;
            let a = if k + 1 < self.layers.len() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    /// Mean squared error on a batch and its gradients w.r.t. every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Vec<LayerGrad>) {
        let m = x.nrows() as f64;
        let (pre, acts) = self.forward_cache(x);
        let out = acts.last().expect("output").column(0).to_owned();
        let resid = &out - &y;
        let loss = resid.dot(&resid) / m;

        let mut delta = (resid * (2.0 / m)).insert_axis(Axis(1));
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = acts[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights.t());
                back.zip_mut_with(&pre[k - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
            grads.push(LayerGrad { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let (_, acts) = self.forward_cache(x);
        let out = acts.last().expect("output").column(0).to_owned();
        let r = &out - &y;
        r.dot(&r) / x.nrows() as f64
    }
}

fn layer_widths(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    fn new(layers: &[Dense], lr: f64) -> Self {
        let zeros: Vec<_> = layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-7, t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &[LayerGrad]) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let lr_t = self.lr * (1.0 - b2.powi(self.t)).sqrt() / (1.0 - b1.powi(self.t));
        let eps = self.eps;
        for (k, layer) in layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            ndarray::Zip::from(&mut layer.weights)
                .and(mw)
                .and(vw)
                .and(&grads[k].weights)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(&grads[k].bias)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}

impl Regressor for MlpModel {
    fn input_width(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut a = row.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights) + &layer.bias;
            a = if k + 1 < self.layers.len() { z.mapv(|v| v.max(0.0)) } else { z };
        }
        a[0]
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.input_width())?;
        let (_, acts) = self.forward_cache(x);
        Ok(acts.last().expect("output").column(0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_bias() {
        let mut m = MlpModel::zeros(5, &[64, 128, 64, 32]);
        m.layers.last_mut().unwrap().bias[0] = 3.25;
        let x = Array2::from_elem((4, 5), 0.7);
        assert!(m.predict(x.view()).unwrap().iter().all(|&v| v == 3.25));
        assert_eq!(m.predict_row(x.row(0)), 3.25);
    }

    #[test]
    fn layer_shapes_chain() {
        let m = MlpModel::init(116, &[64, 128, 64, 32], 1);
        let shapes: Vec<_> = m.layers.iter().map(|l| l.weights.dim()).collect();
        assert_eq!(shapes, vec![(116, 64), (64, 128), (128, 64), (64, 32), (32, 1)]);
        assert_eq!(m.input_width(), 116);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = MlpModel::init(10, &[8], 4);
        assert_eq!(a, MlpModel::init(10, &[8], 4));
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = SplitMix64::new(9);
        let x = Array2::from_shape_fn((64, 3), |_| rng.next_f64());
        let y = Array1::from_shape_fn(64, |i| 2.0 * x[[i, 0]] - x[[i, 1]] + 0.5);
        let p = MlpParams { hidden_layers: vec![16, 16], epochs: 70, ..MlpParams::default() };
        let m = MlpModel::fit(x.view(), y.view(), &p, 3).unwrap();
        assert_eq!(m.loss_history.len(), 70);
        assert!(m.loss_history[69] < m.loss_history[0]);
        assert_eq!(m, MlpModel::fit(x.view(), y.view(), &p, 3).unwrap());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let x = Array2::from_elem((8, 2), 1e200);
        let y = Array1::from_elem(8, 1e200);
        let p = MlpParams { hidden_layers: vec![4], epochs: 2, ..MlpParams::default() };
        assert!(matches!(MlpModel::fit(x.view(), y.view(), &p, 1), Err(Error::Fit(_))));
    }
}
