//! Independent re-computations of what the library computes incrementally or
//! iteratively: normal equations, exhaustive searches, a projected-gradient QP
//! and finite differences.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use soilspec::ensembles::{MaxFeatures, RegressionTree, SplitMode, TreeNode, TreeParams};
use soilspec::preprocess::{MinMaxScaler, PcaModel};
use soilspec::regressors::{
    KnnModel, KnnParams, KnnWeighting, LinearModel, MlpModel, PlsModel, PlsParams, Regressor, SvrModel, SvrParams,
};
use soilspec::rng::SplitMix64;
use soilspec::som::SomGrid;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = SplitMix64::new(seed);
    Array2::from_shape_fn((rows, cols), |_| 2.0 * rng.next_f64() - 1.0)
}

fn linear_data(seed: u64) -> (Array2<f64>, Array1<f64>) {
    let x = random_matrix(50, 5, seed);
    let mut rng = SplitMix64::new(seed + 100);
    let y = Array1::from_shape_fn(50, |i| {
        1.5 * x[[i, 0]] - 2.0 * x[[i, 1]] + 0.5 * x[[i, 3]] + 4.0 + 0.3 * (rng.next_f64() - 0.5)
    });
    (x, y)
}

pub fn ols_residual_is_orthogonal_to_the_design() {
    let (x, y) = linear_data(1);
    let m = LinearModel::fit(x.view(), y.view()).unwrap();
    let r = &y - &m.predict(x.view()).unwrap();
    assert!(r.sum().abs() < 1e-8, "intercept column: {}", r.sum());
    for (j, col) in x.columns().into_iter().enumerate() {
        let dot = col.dot(&r);
        assert!(dot.abs() < 1e-8, "column {j}: {dot}");
    }
}

pub fn ols_predictions_survive_an_invertible_affine_reparameterization() {
    let (x, y) = linear_data(2);
    let mix = Array2::<f64>::eye(5) + 0.3 * random_matrix(5, 5, 3);
    let shift = Array1::from(vec![1.0, -2.0, 0.5, 3.0, -0.7]);
    let x2 = x.dot(&mix) + &shift;
    let a = LinearModel::fit(x.view(), y.view()).unwrap().predict(x.view()).unwrap();
    let b = LinearModel::fit(x2.view(), y.view()).unwrap().predict(x2.view()).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-6);
    }
}

pub fn pls_with_every_component_equals_ols() {
    let (x, y) = linear_data(4);
    let ols = LinearModel::fit(x.view(), y.view()).unwrap().predict(x.view()).unwrap();
    let params = PlsParams { n_components: 5, ..PlsParams::default() };
    let pls = PlsModel::fit(x.view(), y.view(), &params).unwrap().predict(x.view()).unwrap();
    for (p, q) in ols.iter().zip(&pls) {
        assert!((p - q).abs() < 1e-6, "{p} vs {q}");
    }
}

fn knn_brute_force(x: &Array2<f64>, y: &Array1<f64>, q: ArrayView1<f64>, k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = x
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
        .collect();
    let zeros: Vec<f64> = d.iter().filter(|p| p.0 == 0.0).map(|p| y[p.1]).collect();
    if !zeros.is_empty() {
        return zeros.iter().sum::<f64>() / zeros.len() as f64;
    }
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (num, den) = d[..k].iter().fold((0.0, 0.0), |(n, w), &(dist, i)| (n + y[i] / dist, w + 1.0 / dist));
    num / den
}

pub fn knn_matches_brute_force() {
    let x = random_matrix(200, 4, 5);
    let y = x.map_axis(Axis(1), |r| r[0] * r[1] + r[2].sin());
    let params = KnnParams { n_neighbors: 6, weights: KnnWeighting::Distance };
    let model = KnnModel::fit(x.view(), y.view(), &params).unwrap();
    let queries = random_matrix(60, 4, 6);
    for q in queries.rows().into_iter().chain(x.rows().into_iter().take(10)) {
        let got = model.predict_row(q);
        let want = knn_brute_force(&x, &y, q, 6);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum()
}

/// Best (feature, threshold, gain) by recomputing both children's SSE at every midpoint.
fn brute_force_split(x: &Array2<f64>, y: &Array1<f64>, rows: &[usize]) -> Option<(usize, f64, f64)> {
    let parent: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let base = sse(&parent);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.ncols() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| x[[i, f]]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let left: Vec<f64> = rows.iter().filter(|&&i| x[[i, f]] <= thr).map(|&i| y[i]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&i| x[[i, f]] > thr).map(|&i| y[i]).collect();
            let gain = base - sse(&left) - sse(&right);
            if best.is_none_or(|b| gain > b.2) {
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

pub fn cart_splits_match_an_exhaustive_gain_scan() {
    let x = random_matrix(40, 3, 7);
    let mut rng = SplitMix64::new(8);
    let y = Array1::from_shape_fn(40, |i| (3.0 * x[[i, 0]]).sin() + x[[i, 2]].powi(2) + 0.1 * rng.next_f64());
    let params = TreeParams {
        max_depth: None,
        min_samples_split: 2,
        split_mode: SplitMode::Exhaustive,
        max_features: MaxFeatures::All,
    };
    let all: Vec<usize> = (0..40).collect();
    let tree = RegressionTree::fit(x.view(), y.view(), &all, &params, &mut SplitMix64::new(0));

    // rows resident at each node, by routing the training set
    let mut resident: Vec<Vec<usize>> = vec![vec![]; tree.nodes.len()];
    for i in 0..40 {
        let mut k = 0;
        loop {
            resident[k].push(i);
            match tree.nodes[k] {
                TreeNode::Leaf { .. } => break,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    k = if x[[i, feature]] <= threshold { left } else { right };
                }
            }
        }
    }
    let mut checked = 0;
    for (k, node) in tree.nodes.iter().enumerate() {
        match *node {
            TreeNode::Split { feature, threshold, gain, .. } => {
                let (f, t, g) = brute_force_split(&x, &y, &resident[k]).expect("splittable node");
                assert_eq!((feature, threshold), (f, t), "node {k}");
                assert!((gain - g).abs() <= 1e-9 * g.abs().max(1e-12), "node {k}: {gain} vs {g}");
                checked += 1;
            }
            TreeNode::Leaf { value, .. } => {
                let v: Vec<f64> = resident[k].iter().map(|&i| y[i]).collect();
                assert!((value - v.iter().sum::<f64>() / v.len() as f64).abs() < 1e-12);
            }
        }
    }
    assert!(checked > 10);
    // unlimited depth on distinct targets memorizes the training set
    assert_eq!(tree.n_leaves(), 40);
}

pub fn bmu_matches_an_exhaustive_scan() {
    let w = random_matrix(30 * 70, 6, 9);
    let grid = SomGrid::new(30, 70, w.clone()).unwrap();
    let queries = random_matrix(100, 6, 10);
    for q in queries.rows() {
        let mut best = (f64::INFINITY, 0);
        for (k, r) in w.rows().into_iter().enumerate() {
            let d: f64 = r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        assert_eq!(grid.find_bmu(q).unwrap(), (best.1 / 70, best.1 % 70));
    }
}

pub fn pca_with_all_components_reconstructs_the_data() {
    let x = random_matrix(40, 6, 11) * 3.0 + 1.0;
    let pca = PcaModel::fit(x.view(), 6).unwrap();
    let back = pca.inverse_transform(pca.transform(x.view()).unwrap().view()).unwrap();
    for (a, b) in x.iter().zip(&back) {
        assert!((a - b).abs() < 1e-8);
    }
}

pub fn min_max_scaling_round_trips() {
    let x = random_matrix(30, 4, 12) * 50.0;
    let y = Array1::from_shape_fn(30, |i| 8.0 + i as f64 * 0.7);
    let s = MinMaxScaler::fit(x.view(), y.view()).unwrap();
    let xb = s.inverse_features(s.transform_features(x.view()).unwrap().view()).unwrap();
    let yb = s.inverse_targets(s.transform_targets(y.view()).view()).unwrap();
    for (a, b) in x.iter().zip(&xb).chain(y.iter().zip(&yb)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn rbf_kernel(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let d: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
        (-gamma * d).exp()
    })
}

/// epsilon-SVR dual in `beta = alpha - alpha*`: ½βᵀKβ + ε‖β‖₁ − yᵀβ.
fn svr_dual(k: &Array2<f64>, y: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> f64 {
    0.5 * beta.dot(&k.dot(beta)) + eps * beta.mapv(f64::abs).sum() - y.dot(beta)
}

/// Projection of `v` onto {0 ≤ z ≤ C, aᵀz = 0}, `a = (1…1, −1…−1)`, by bisection on the shift.
fn project(v: &Array1<f64>, c: f64, n: usize) -> Array1<f64> {
    let at = |lambda: f64| -> (Array1<f64>, f64) {
        let z = Array1::from_shape_fn(2 * n, |i| {
            let a = if i < n { 1.0 } else { -1.0 };
            (v[i] - lambda * a).clamp(0.0, c)
        });
        let s = z.slice(ndarray::s![..n]).sum() - z.slice(ndarray::s![n..]).sum();
        (z, s)
    };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

pub fn svr_objective_matches_a_projected_gradient_qp_solve() {
    let n = 30;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * 2.0 * std::f64::consts::PI / (n - 1) as f64);
    let y = x.column(0).mapv(f64::sin);
    let (c, gamma, eps) = (10.0, 0.5, 0.1);
    let k = rbf_kernel(&x, gamma);

    // accelerated projected gradient over z = (alpha, alpha*)
    let lip = 2.0 * n as f64;
    let grad = |z: &Array1<f64>| -> Array1<f64> {
        let beta = &z.slice(ndarray::s![..n]) - &z.slice(ndarray::s![n..]);
        let kb = k.dot(&beta);
        Array1::from_shape_fn(2 * n, |i| if i < n { kb[i] + eps - y[i] } else { -kb[i - n] + eps + y[i - n] })
    };
    let mut z = Array1::zeros(2 * n);
    let mut w = z.clone();
    let mut t = 1.0f64;
    for _ in 0..50_000 {
        let next = project(&(&w - &(grad(&w) / lip)), c, n);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        w = &next + &((&next - &z) * ((t - 1.0) / t_next));
        z = next;
        t = t_next;
    }
    let beta_oracle = &z.slice(ndarray::s![..n]) - &z.slice(ndarray::s![n..]);
    let f_oracle = svr_dual(&k, &y, &beta_oracle, eps);

    let params = SvrParams { c, gamma, epsilon: eps, ..SvrParams::default() };
    let model = SvrModel::fit(x.view(), y.view(), &params).unwrap();
    assert!(model.converged);
    let mut beta = Array1::zeros(n);
    for (sv, &coef) in model.support_vectors.rows().into_iter().zip(&model.dual_coef) {
        let i = (0..n).find(|&i| x[[i, 0]] == sv[0]).expect("support vector is a training row");
        beta[i] = coef;
    }
    assert!(beta.iter().all(|b: &f64| b.abs() <= c + 1e-12));
    let f_smo = svr_dual(&k, &y, &beta, eps);
    assert!(f_oracle < 0.0);
    assert!((f_smo - f_oracle).abs() <= 0.01 * f_oracle.abs(), "SMO {f_smo} vs oracle {f_oracle}");
    assert!((model.objective - f_smo).abs() <= 1e-6 * f_smo.abs().max(1.0));
}

pub fn mlp_gradients_match_central_differences_at_every_layer() {
    let x = random_matrix(5, 6, 13);
    let y = Array1::from(vec![0.5, -1.0, 2.0, 0.0, 1.5]);
    let model = MlpModel::init(6, &[64, 128, 64, 32], 14);
    let (_, grads) = model.loss_and_gradients(x.view(), y.view());
    let h = 1e-5;
    let loss_with = |layer: usize, bias: bool, idx: (usize, usize), delta: f64| {
        let mut m = model.clone();
        if bias {
            m.layers[layer].bias[idx.1] += delta;
        } else {
            m.layers[layer].weights[idx] += delta;
        }
        m.loss(x.view(), y.view())
    };
    for (l, g) in grads.iter().enumerate() {
        for bias in [false, true] {
            let analytic: Vec<(usize, usize, f64)> = if bias {
                g.bias.iter().enumerate().map(|(j, &v)| (0, j, v)).collect()
            } else {
                g.weights.indexed_iter().map(|((i, j), &v)| (i, j, v)).collect()
            };
            let (mut diff, mut scale) = (0.0f64, 0.0f64);
            for (i, j, a) in analytic {
                let numeric = (loss_with(l, bias, (i, j), h) - loss_with(l, bias, (i, j), -h)) / (2.0 * h);
                diff = diff.max((a - numeric).abs());
                scale = scale.max(a.abs()).max(numeric.abs());
            }
            let rel = diff / scale.max(1e-12);
            assert!(rel < 1e-4, "layer {l} ({}): relative error {rel:e}", if bias { "bias" } else { "weights" });
        }
    }
}
