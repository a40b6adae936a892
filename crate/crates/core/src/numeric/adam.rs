use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators mirroring a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ParamStore) -> Self {
        OptimState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut OptimState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) || !params.same_layout(&state.v)
    {
        return Err(Error::Dimension(
            "parameters, gradients and optimizer state disagree".into(),
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);

    for (((_, p), (_, g)), ((_, m), (_, v))) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters after optimizer step".into()));
    }
    Ok(())
}
