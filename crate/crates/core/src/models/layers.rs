//! Trainable layer building blocks. Each layer owns its parameters, can
//! record itself onto a tape for training, and can run tape-free for
//! inference.

use crate::border::PaddingMode;
use crate::error::Result;
use crate::ops;
use crate::optim::Param;
use crate::rng::{Rng, RngExt};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn uniform(rng: &mut Rng, bound: f64, n: usize, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(n, c, h, w, |_, _, _, _| rng.gen_range(-bound..bound))
}

/// He-uniform: U(+-sqrt(6/fan_in)).
pub fn he_uniform(rng: &mut Rng, fan_in: usize, n: usize, c: usize, h: usize, w: usize) -> Tensor {
    uniform(rng, (6.0 / fan_in as f64).sqrt(), n, c, h, w)
}

/// Xavier-uniform: U(+-sqrt(6/(fan_in+fan_out))).
pub fn xavier_uniform(
    rng: &mut Rng,
    fan_in: usize,
    fan_out: usize,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Tensor {
    uniform(rng, (6.0 / (fan_in + fan_out) as f64).sqrt(), n, c, h, w)
}

pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub mode: PaddingMode,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        name: &str,
        ci: usize,
        co: usize,
        k: usize,
        mode: PaddingMode,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = he_uniform(rng, ci * k * k, co, ci, k, k);
        Conv2d {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), Tensor::zeros(1, co, 1, 1)),
            mode,
            stride,
        }
    }

    pub fn new_xavier(
        name: &str,
        ci: usize,
        co: usize,
        k: usize,
        mode: PaddingMode,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = xavier_uniform(rng, ci * k * k, co * k * k, co, ci, k, k);
        Conv2d {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), Tensor::zeros(1, co, 1, 1)),
            mode,
            stride,
        }
    }

    pub fn kernel(&self) -> usize {
        self.w.value.h()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.w);
        let b = tape.param(&self.b);
        tape.conv2d(x, w, b, self.mode, self.stride)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d_forward(x, &self.w.value, &self.b.value, self.mode, self.stride)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }
}

pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub run_mean: Vec<f64>,
    pub run_var: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(name: &str, c: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(1, c, 1, 1, 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(1, c, 1, 1)),
            run_mean: vec![0.0; c],
            run_var: vec![1.0; c],
        }
    }

    /// Training pass: batch statistics on the tape, running buffers updated
    /// in place.
    pub fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (n, _, h, w) = tape.value(x).shape();
        let m = n * h * w;
        let gamma = tape.param(&self.gamma);
        let beta = tape.param(&self.beta);
        let (y, mean, inv_std) = tape.batchnorm_train(x, gamma, beta, ops::BN_EPS)?;
        ops::bn_update_running(
            &mut self.run_mean,
            &mut self.run_var,
            &mean,
            &inv_std,
            m,
            ops::BN_EPS,
            ops::BN_MOMENTUM,
        );
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        ops::bn_forward_eval(
            x,
            &self.gamma.value,
            &self.beta.value,
            &self.run_mean,
            &self.run_var,
            ops::BN_EPS,
        )
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }

    /// Running statistics as named tensors for checkpointing.
    pub fn buffers(&self, name: &str) -> Vec<(String, Tensor)> {
        let c = self.run_mean.len();
        let as_t = |v: &[f64]| Tensor::new(1, c, 1, 1, v.to_vec()).expect("channel vector");
        vec![
            (format!("{name}.run_mean"), as_t(&self.run_mean)),
            (format!("{name}.run_var"), as_t(&self.run_var)),
        ]
    }

    pub fn set_buffers(&mut self, mean: &Tensor, var: &Tensor) -> Result<()> {
        let c = self.run_mean.len();
        for (what, t) in [("mean", mean), ("var", var)] {
            if t.shape() != (1, c, 1, 1) {
                return Err(crate::error::Error::dimension(format!(
                    "running {what} must be (1,{c},1,1), got {:?}",
                    t.shape()
                )));
            }
        }
        self.run_mean.copy_from_slice(mean.data());
        self.run_var.copy_from_slice(var.data());
        Ok(())
    }
}

pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(name: &str, d: usize, k: usize, rng: &mut Rng) -> Self {
        Linear {
            w: Param::new(format!("{name}.w"), he_uniform(rng, d, k, d, 1, 1)),
            b: Param::new(format!("{name}.b"), Tensor::zeros(1, k, 1, 1)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.w);
        let b = tape.param(&self.b);
        tape.linear(x, w, b)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        ops::linear_forward(x, &self.w.value, &self.b.value)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.w, &self.b]
    }
}

/// Theoretical receptive field and coordinate jump of a conv stack given
/// (kernel, stride) per layer.
pub fn theoretical_rf(layers: &[(usize, usize)]) -> (usize, usize) {
    let mut rf = 1usize;
    let mut jump = 1usize;
    for &(k, s) in layers {
        rf += (k - 1) * jump;
        jump *= s;
    }
    (rf, jump)
}
