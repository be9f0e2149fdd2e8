//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::arch::{Model, ModelGrads, ParamKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter optimizer state. `m`/`v` are shaped like the parameter and
/// `step` increments by exactly one per update.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Tensor,
    pub v: Tensor,
    pub hyper: AdamParams,
}

impl AdamState {
    pub fn new(shape: &[usize], hyper: AdamParams) -> Self {
        AdamState {
            step: 0,
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            hyper,
        }
    }
}

/// One Adam update on `param` in place.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState) -> Result<()> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "adam: param {:?}, grad {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    grad.check_finite("gradient passed to adam")?;
    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for ((p, g), (mi, vi)) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        let g = *g as f64;
        let m_new = h.beta1 * *mi as f64 + (1.0 - h.beta1) * g;
        let v_new = h.beta2 * *vi as f64 + (1.0 - h.beta2) * g * g;
        *mi = m_new as f32;
        *vi = v_new as f32;
        let m_hat = m_new / bc1;
        let v_hat = v_new / bc2;
        *p = (*p as f64 - h.lr * m_hat / (v_hat.sqrt() + h.epsilon)) as f32;
    }
    Ok(())
}

/// Adam state for every trainable tensor of a model, in traversal order.
#[derive(Clone, Debug)]
pub struct ModelOptimizer {
    pub states: Vec<AdamState>,
}

impl ModelOptimizer {
    pub fn new(model: &Model, hyper: AdamParams) -> Self {
        let states = model
            .named_tensors()
            .iter()
            .filter(|t| t.kind == ParamKind::Trainable)
            .map(|t| AdamState::new(t.tensor.shape(), hyper))
            .collect();
        ModelOptimizer { states }
    }

    /// Applies one Adam update to every trainable parameter.
    pub fn step(&mut self, model: &mut Model, grads: &ModelGrads) -> Result<()> {
        let flat = grads.flatten();
        let mut named = model.named_tensors_mut();
        let mut params: Vec<&mut Tensor> = named
            .iter_mut()
            .filter(|t| t.kind == ParamKind::Trainable)
            .map(|t| &mut *t.tensor)
            .collect();
        if flat.len() != params.len() || flat.len() != self.states.len() {
            return Err(Error::Protocol(format!(
                "optimizer step: {} gradients, {} parameters, {} states",
                flat.len(),
                params.len(),
                self.states.len()
            )));
        }
        for ((p, g), s) in params.iter_mut().zip(flat).zip(self.states.iter_mut()) {
            adam_step(p, g, s)?;
        }
        Ok(())
    }
}
