//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridgecast::autodiff::Tensor;
use ridgecast::dataset::{FeatureSpec, ForecastTask, Frequency, TimeSeries};
use ridgecast::model::{BackboneKind, GlobalParams, ModelConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Minimizes `Σ (wᵀh_t − z_t)² + γ‖w − w₀‖²` by Nesterov-accelerated gradient
/// descent with step `1/L`, `L` bounding the Hessian's largest eigenvalue.
pub fn ridge_by_gradient_descent(h: &Tensor, z: &[f64], gamma: f64, anchor: Option<&[f64]>) -> Vec<f64> {
    let (n, d) = (h.rows(), h.cols());
    let w0 = anchor.map_or(vec![0.0; d], <[f64]>::to_vec);
    // objective gradient: 2 Hᵀ(Hw − z) + 2γ(w − w₀)
    let grad = |w: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for t in 0..n {
            r[t] = (0..d).map(|j| h.get(t, j) * w[j]).sum::<f64>() - z[t];
        }
        (0..d)
            .map(|j| 2.0 * (0..n).map(|t| h.get(t, j) * r[t]).sum::<f64>() + 2.0 * gamma * (w[j] - w0[j]))
            .collect()
    };
    // Frobenius norm bounds the spectral norm
    let fro: f64 = h.data().iter().map(|v| v * v).sum();
    let l = 2.0 * (fro + gamma);
    let mu = 2.0 * gamma;
    let momentum = ((l / mu).sqrt() - 1.0) / ((l / mu).sqrt() + 1.0);
    let mut w = vec![0.0; d];
    let mut y = w.clone();
    for _ in 0..2_000_000 {
        let g = grad(&y);
        let next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / l).collect();
        y = next.iter().zip(&w).map(|(a, b)| a + momentum * (a - b)).collect();
        w = next;
        let gn = grad(&w).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gn < 1e-11 {
            break;
        }
    }
    w
}

pub fn small_config(backbone: BackboneKind, rep_dim: usize, context_len: usize, log_scale: bool) -> ModelConfig {
    let mut c = ModelConfig::new(backbone, Frequency::Quarterly, rep_dim, context_len);
    c.hidden_dim = rep_dim;
    c.features.log_scale = log_scale;
    c
}

pub fn params(config: ModelConfig, seed: u64) -> GlobalParams {
    GlobalParams::init(config, &mut rng(seed)).unwrap()
}

/// Positive seasonal series of length `len`.
pub fn wave(id: &str, len: usize, level: f64, seed: u64) -> TimeSeries {
    let mut r = rng(seed);
    let phase = r.gen_range(0.0..6.0);
    let values = (0..len)
        .map(|t| level * (1.0 + 0.3 * (t as f64 * 1.5708 + phase).sin() + 0.05 * r.gen_range(-1.0..1.0)))
        .collect();
    TimeSeries::new(id, Frequency::Quarterly, values)
}

pub fn task(series: &TimeSeries, params: &GlobalParams, split: usize, horizon: usize) -> ForecastTask {
    ForecastTask::new(
        series,
        split,
        params.config.context_len,
        horizon,
        Arc::new(params.config.features.clone()),
        split + horizon <= series.len(),
    )
    .unwrap()
}

pub fn features(params: &GlobalParams) -> Arc<FeatureSpec> {
    Arc::new(params.config.features.clone())
}
