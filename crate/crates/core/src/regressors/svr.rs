//! Epsilon-SVR with an RBF kernel, trained by SMO with second-order working
//! set selection on the 2n-variable dual.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, sq_dist, Regressor};
use crate::error::{Error, Result};
use crate::hyperparams::HyperparameterSet;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self { c: 26827.0, gamma: 0.00178, epsilon: 0.1, tol: 1e-3, max_iter: None }
    }
}

impl SvrParams {
    pub const KEYS: &'static [&'static str] = &["C", "gamma", "epsilon", "tol", "max_iter"];

    pub fn from_hp(hp: &HyperparameterSet) -> Result<Self> {
        hp.check_keys(Self::KEYS)?;
        let d = Self::default();
        let epsilon = hp.f64_or("epsilon", d.epsilon)?;
        if epsilon < 0.0 {
            return Err(Error::hp("epsilon", "must be >= 0"));
        }
        Ok(Self {
            c: hp.positive_f64_or("C", d.c)?,
            gamma: hp.positive_f64_or("gamma", d.gamma)?,
            epsilon,
            tol: hp.positive_f64_or("tol", d.tol)?,
            max_iter: hp.opt_usize_or("max_iter", d.max_iter)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub params: SvrParams,
    pub support_vectors: Array2<f64>,
    /// `alpha_i - alpha_i*` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Dual objective `0.5 a^T Q a + p^T a` at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn rbf(gamma: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

impl SvrModel {
    pub fn fit(x: ArrayView2<f64>, z: ArrayView1<f64>, params: &SvrParams) -> Result<Self> {
        check_training_data(x, z, 2)?;
        let l = x.nrows();
        let c = params.c;
        let kernel: Vec<Vec<f64>> = (0..l)
            .into_par_iter()
            .map(|i| (0..l).map(|j| rbf(params.gamma, x.row(i), x.row(j))).collect())
            .collect();

        let n = 2 * l;
        let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
        let kidx = |t: usize| if t < l { t } else { t - l };
        let p: Vec<f64> = (0..n)
            .map(|t| if t < l { params.epsilon - z[t] } else { params.epsilon + z[t - l] })
            .collect();
        let qd: Vec<f64> = (0..n).map(|t| kernel[kidx(t)][kidx(t)]).collect();
        let mut alpha = vec![0.0; n];
        let mut grad = p.clone();

        let max_iter = params.max_iter.unwrap_or_else(|| 10_000_000usize.max(100 * l));
        let mut iter = 0;
        let mut converged = false;
        while iter < max_iter {
            // maximal violating i, then second-order choice of j
            let mut gmax = f64::NEG_INFINITY;
            let mut i_sel = usize::MAX;
            for t in 0..n {
                if sign(t) > 0.0 {
                    if alpha[t] < c && -grad[t] >= gmax {
                        gmax = -grad[t];
                        i_sel = t;
                    }
                } else if alpha[t] > 0.0 && grad[t] >= gmax {
                    gmax = grad[t];
                    i_sel = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j_sel = usize::MAX;
            let mut best_obj = f64::INFINITY;
            if i_sel != usize::MAX {
                let yi = sign(i_sel);
                let ki = &kernel[kidx(i_sel)];
                for t in 0..n {
                    let yt = sign(t);
                    let q_it = yi * yt * ki[kidx(t)];
                    let (active, gd, quad) = if yt > 0.0 {
                        if alpha[t] > 0.0 {
                            gmax2 = gmax2.max(grad[t]);
                        }
                        (alpha[t] > 0.0, gmax + grad[t], qd[i_sel] + qd[t] - 2.0 * yi * q_it)
                    } else {
                        if alpha[t] < c {
                            gmax2 = gmax2.max(-grad[t]);
                        }
                        (alpha[t] < c, gmax - grad[t], qd[i_sel] + qd[t] + 2.0 * yi * q_it)
                    };
                    if active && gd > 0.0 {
                        let obj = -(gd * gd) / if quad > 0.0 { quad } else { TAU };
                        if obj <= best_obj {
                            best_obj = obj;
                            j_sel = t;
                        }
                    }
                }
            }
            if gmax + gmax2 < params.tol || j_sel == usize::MAX {
                converged = true;
                break;
            }
            iter += 1;

            let (i, j) = (i_sel, j_sel);
            let (yi, yj) = (sign(i), sign(j));
            let kij = kernel[kidx(i)][kidx(j)];
            let q_ij = yi * yj * kij;
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if yi != yj {
                let quad = (qd[i] + qd[j] + 2.0 * q_ij).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = (qd[i] + qd[j] - 2.0 * q_ij).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            let (ki, kj) = (&kernel[kidx(i)], &kernel[kidx(j)]);
            for t in 0..n {
                let yt = sign(t);
                let kt = kidx(t);
                grad[t] += yi * yt * ki[kt] * di + yj * yt * kj[kt] * dj;
            }
        }
        if !converged {
            log::warn!("SVR: SMO stopped at the iteration cap ({max_iter}) before reaching tolerance");
        }

        // offset from free variables, else midpoint of the feasible interval
        let (mut ub, mut lb, mut sum_free, mut nr_free) =
            (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..n {
            let yg = sign(t) * grad[t];
            let at_upper = alpha[t] >= c;
            let at_lower = alpha[t] <= 0.0;
            if at_upper {
                if sign(t) < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
            } else if at_lower {
                if sign(t) > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
            } else {
                nr_free += 1;
                sum_free += yg;
            }
        }
        let rho = if nr_free > 0 { sum_free / nr_free as f64 } else { (ub + lb) / 2.0 };
        let objective = (0..n).map(|t| alpha[t] * (grad[t] + p[t])).sum::<f64>() / 2.0;

        let mut rows = Vec::new();
        let mut dual_coef = Vec::new();
        for i in 0..l {
            let coef = alpha[i] - alpha[i + l];
            if coef != 0.0 {
                rows.push(i);
                dual_coef.push(coef);
            }
        }
        let support_vectors = x.select(ndarray::Axis(0), &rows);
        Ok(Self {
            params: *params,
            support_vectors,
            dual_coef,
            bias: -rho,
            objective,
            iterations: iter,
            converged,
        })
    }
}

impl Regressor for SvrModel {
    fn input_width(&self) -> usize {
        self.support_vectors.ncols()
    }

    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.bias
            + self
                .support_vectors
                .rows()
                .into_iter()
                .zip(&self.dual_coef)
                .map(|(sv, a)| a * rbf(self.params.gamma, sv, row))
                .sum::<f64>()
    }
}
