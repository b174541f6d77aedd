//! Trainable parameters and plain SGD with momentum and weight decay.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named trainable tensor. Gradients accumulate here between tape passes;
/// the optimizer consumes them.
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Vec<f64>>,
    velocity: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let velocity = vec![0.0; value.numel()];
        Param {
            name: name.into(),
            value,
            grad: None,
            velocity,
        }
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.value.numel());
        match &mut self.grad {
            Some(cur) => {
                for (c, a) in cur.iter_mut().zip(g) {
                    *c += *a;
                }
            }
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// v <- momentum*v + g + weight_decay*w; w <- w - lr*v.
/// Consumes each parameter's gradient; a missing gradient is a wiring bug.
pub fn sgd_step(params: &mut [&mut Param], cfg: &SgdConfig) -> Result<()> {
    for p in params.iter_mut() {
        let g = p.grad.take().ok_or_else(|| {
            Error::contract(format!("sgd_step: parameter {:?} has no gradient", p.name))
        })?;
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let v = cfg.momentum * p.velocity[i] + g[i] + cfg.weight_decay * w[i];
            p.velocity[i] = v;
            w[i] -= cfg.lr * v;
        }
    }
    Ok(())
}
