use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::model::GlobalParams;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `p -= lr · weight_decay · p` each step.
    pub weight_decay: f64,
    /// Maximum global gradient norm.
    pub clip_norm: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-8,
            clip_norm: 10.0,
        }
    }
}

/// First/second moment estimates, shaped like the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &GlobalParams) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Global norm of the incoming gradient.
    pub grad_norm: f64,
    /// Global norm after clipping.
    pub clipped_norm: f64,
    /// The gradient was non-finite and no update was made.
    pub skipped: bool,
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// One ADAM update with global-norm clipping and decoupled weight decay.
///
/// A non-finite gradient leaves parameters and moments untouched; the step
/// counter still advances.
pub fn adam_step(
    params: &mut GlobalParams,
    grads: &[Tensor],
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<StepReport> {
    if grads.len() != params.params.len() || state.m.len() != grads.len() {
        return Err(Error::Training(format!(
            "{} gradients for {} parameter tensors",
            grads.len(),
            params.params.len()
        )));
    }
    for (g, p) in grads.iter().zip(&params.params) {
        if g.shape() != p.tensor.shape() {
            return Err(Error::Training(format!(
                "gradient of {} is {:?}, parameter is {:?}",
                p.name,
                g.shape(),
                p.tensor.shape()
            )));
        }
    }
    state.step += 1;
    let grad_norm = global_norm(grads);
    if !grad_norm.is_finite() {
        log::warn!("step {}: non-finite gradient, update skipped", state.step);
        return Ok(StepReport {
            grad_norm,
            clipped_norm: grad_norm,
            skipped: true,
        });
    }
    let clip = if grad_norm > cfg.clip_norm {
        cfg.clip_norm / grad_norm
    } else {
        1.0
    };
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj * clip;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            let c = gj * clip;
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * c * c;
        }
        let m = state.m[i].data();
        let v = state.v[i].data();
        for (j, w) in p.tensor.data_mut().iter_mut().enumerate() {
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *w);
        }
    }
    Ok(StepReport {
        grad_norm,
        clipped_norm: grad_norm * clip,
        skipped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frequency;
    use crate::model::{BackboneKind, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> GlobalParams {
        let cfg = ModelConfig::new(BackboneKind::Linear, Frequency::Quarterly, 3, 8);
        GlobalParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn filled(p: &GlobalParams, v: f64) -> Vec<Tensor> {
        p.tensors().map(|t| Tensor::filled(t.rows(), t.cols(), v)).collect()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let mut s = OptimizerState::new(&p);
        let mut cfg = AdamConfig::new(1e-3);
        cfg.weight_decay = 0.0;
        let g = filled(&p, 0.0);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn clipping_rescales_to_the_bound() {
        let mut p = params();
        let n = p.num_scalars() as f64;
        // every entry 20/sqrt(n) gives global norm 20
        let g = filled(&p, 20.0 / n.sqrt());
        let mut s = OptimizerState::new(&p);
        let r = adam_step(&mut p, &g, &mut s, &AdamConfig::new(1e-3)).unwrap();
        assert!((r.grad_norm - 20.0).abs() < 1e-9);
        assert!((r.clipped_norm - 10.0).abs() < 1e-9);
        let m0 = s.m[0].data()[0];
        assert!((m0 - 0.1 * 0.5 * 20.0 / n.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_the_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = filled(&p, 0.3);
        g[0].data_mut()[0] = -2.0;
        let mut cfg = AdamConfig::new(1e-3);
        cfg.weight_decay = 0.0;
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        let d0 = p.params[0].tensor.data()[0] - before.params[0].tensor.data()[0];
        let d1 = p.params[0].tensor.data()[1] - before.params[0].tensor.data()[1];
        assert!((d0 - 1e-3).abs() < 1e-10);
        assert!((d1 + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn non_finite_gradient_skips_but_counts() {
        let mut p = params();
        let before = p.clone();
        let mut g = filled(&p, 1.0);
        g[1].data_mut()[0] = f64::NAN;
        let mut s = OptimizerState::new(&p);
        let r = adam_step(&mut p, &g, &mut s, &AdamConfig::new(1e-3)).unwrap();
        assert!(r.skipped);
        assert_eq!(s.step, 1);
        assert_eq!(p, before);
    }
}
