use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, learning_rate }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

/// Adam moments, one slot per parameter in store order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One update from the accumulated gradients, each multiplied by `grad_scale`.
///
/// Frozen parameters and parameters without a gradient are left untouched.
/// Any non-finite gradient aborts the step before anything is modified.
pub fn optimizer_step<T: Scalar>(
    params: &mut ParamStore<T>,
    state: &mut OptimizerState,
    config: &OptimizerConfig,
    grad_scale: f64,
) -> Result<()> {
    for p in params.iter_mut() {
        if let Some(g) = &p.grad {
            if p.requires_grad && !g.all_finite() {
                return Err(Error::NonFinite(alloc::format!("gradient of {}", p.name)));
            }
        }
    }
    if state.m.len() < params.len() {
        state.m.resize(params.len(), Vec::new());
        state.v.resize(params.len(), Vec::new());
    }
    state.step += 1;
    let lr = config.learning_rate;
    for (i, p) in params.iter_mut().enumerate() {
        if !p.requires_grad {
            continue;
        }
        let Some(grad) = &p.grad else { continue };
        let values = p.value.data_mut();
        match config.kind {
            OptimizerKind::Sgd => {
                for (w, &g) in values.iter_mut().zip(grad.data()) {
                    *w = T::of(w.to_f64() - lr * grad_scale * g.to_f64());
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (m, v) = (&mut state.m[i], &mut state.v[i]);
                if m.len() != values.len() {
                    *m = vec![0.0; values.len()];
                    *v = vec![0.0; values.len()];
                }
                let t = state.step as i32;
                let (c1, c2) = (1.0 - libm::pow(beta1, t as f64), 1.0 - libm::pow(beta2, t as f64));
                for ((w, &g), (mi, vi)) in values.iter_mut().zip(grad.data()).zip(m.iter_mut().zip(v.iter_mut())) {
                    let g = g.to_f64() * grad_scale;
                    *mi = beta1 * *mi + (1.0 - beta1) * g;
                    *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                    let update = lr * (*mi / c1) / (libm::sqrt(*vi / c2) + eps);
                    *w = T::of(w.to_f64() - update);
                }
            }
        }
    }
    Ok(())
}
