use serde::{Deserialize, Serialize};

use super::{Gradients, NumericsError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment accumulators for every parameter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        OptimizerState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay:
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<(), NumericsError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(NumericsError::ParamCountMismatch {
            expected: params.len(),
            found: grads.len(),
        });
    }
    for id in params.ids() {
        let (p, g) = (params.get(id), grads.get(id));
        if p.shape() != g.shape() || state.m[id.index()].shape() != p.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "adamw_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for id in params.ids() {
        let g = grads.get(id).data();
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let p = params.get_mut(id).data_mut();
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * p[i]);
        }
    }
    Ok(())
}
