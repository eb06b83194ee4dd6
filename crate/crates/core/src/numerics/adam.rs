//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::params::{GradientRecord, ParamSet, ParamTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, index-aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.flat().len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &f64> {
        self.v.iter().flatten()
    }
}

/// One Adam update of `params` in place; increments the step counter.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &GradientRecord,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::usage(format!("adam: lr must be positive, got {}", cfg.lr)));
    }
    if !grads.is_congruent_with(params) || state.m.len() != params.len() {
        return Err(Error::usage("adam: gradients/state not congruent with parameters"));
    }
    for (i, t) in params.tensors().iter().enumerate() {
        if state.m[i].len() != t.flat().len() {
            return Err(Error::usage(format!("adam: state for {} has wrong size", params.names()[i])));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g: &ParamTensor = grads.get(i);
        let p = params.tensor_mut(i).flat_mut();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((pj, &gj), mj), vj) in p.iter_mut().zip(g.flat()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            let mhat = *mj / bc1;
            let vhat = *vj / bc2;
            *pj -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
