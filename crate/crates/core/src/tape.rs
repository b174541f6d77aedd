//! Reverse-mode autodiff over a flat, append-only list of nodes. Recording
//! an op stores its output value plus whatever the backward pass needs, so
//! the node order is already topological and a single reverse sweep suffices.

use crate::border::PaddingMode;
use crate::error::{Error, Result};
use crate::ops::{self, BilinearAlign, PixelLabels};
use crate::optim::Param;
use crate::tensor::Tensor;

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        mode: PaddingMode,
        stride: usize,
    },
    Relu {
        x: Var,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    BnTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BnEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Gap {
        x: Var,
    },
    Bilinear {
        x: Var,
        align: BilinearAlign,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ConcatC {
        xs: Vec<Var>,
        splits: Vec<usize>,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    PixelCe {
        logits: Var,
        labels: PixelLabels,
        probs: Tensor,
    },
    Mse {
        pred: Var,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bindings: Vec<(String, Var)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Bind a parameter's current value as a leaf and remember the binding
    /// so `pull_grads` can route the gradient back by name.
    pub fn param(&mut self, p: &Param) -> Var {
        let v = self.leaf(p.value.clone());
        self.bindings.push((p.name.clone(), v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        mode: PaddingMode,
        stride: usize,
    ) -> Result<Var> {
        let y = ops::conv2d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
            mode,
            stride,
        )?;
        Ok(self.push(y, Op::Conv2d { x, w, b, mode, stride }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu_forward(&self.nodes[x.0].value);
        self.push(y, Op::Relu { x })
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::maxpool2_forward(&self.nodes[x.0].value)?;
        Ok(self.push(y, Op::MaxPool2 { x, argmax }))
    }

    /// Normalizes by batch statistics and returns them so the caller can
    /// update its running buffers.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (y, mean, inv_std) = ops::bn_forward_train(
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
            eps,
        )?;
        let v = self.push(
            y,
            Op::BnTrain {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                inv_std: inv_std.clone(),
            },
        );
        Ok((v, mean, inv_std))
    }

    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        run_mean: &[f64],
        run_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let y = ops::bn_forward_eval(
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
            run_mean,
            run_var,
            eps,
        )?;
        let inv_std: Vec<f64> = run_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        Ok(self.push(
            y,
            Op::BnEval {
                x,
                gamma,
                beta,
                mean: run_mean.to_vec(),
                inv_std,
            },
        ))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::linear_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        )?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn gap(&mut self, x: Var) -> Var {
        let y = ops::gap_forward(&self.nodes[x.0].value);
        self.push(y, Op::Gap { x })
    }

    pub fn bilinear(&mut self, x: Var, oh: usize, ow: usize, align: BilinearAlign) -> Result<Var> {
        let y = ops::bilinear_forward(&self.nodes[x.0].value, oh, ow, align)?;
        Ok(self.push(y, Op::Bilinear { x, align }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid_forward(&self.nodes[x.0].value);
        self.push(y, Op::Sigmoid { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add_forward(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn concat_c(&mut self, xs: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = xs.iter().map(|v| &self.nodes[v.0].value).collect();
        let y = ops::concat_c_forward(&tensors)?;
        let splits: Vec<usize> = tensors.iter().map(|t| t.c()).collect();
        Ok(self.push(
            y,
            Op::ConcatC {
                xs: xs.to_vec(),
                splits,
            },
        ))
    }

    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_ce_forward(&self.nodes[logits.0].value, labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn pixel_ce(&mut self, logits: Var, labels: &PixelLabels) -> Result<Var> {
        let (loss, probs) = ops::pixel_ce_forward(&self.nodes[logits.0].value, labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::PixelCe {
                logits,
                labels: labels.clone(),
                probs,
            },
        ))
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let loss = ops::mse_forward(&self.nodes[pred.0].value, target)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// Accumulate d(loss)/d(node) into every node gradient reachable from
    /// `loss`. Each call seeds the loss with 1 and adds its contribution on
    /// top of whatever earlier calls left behind.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {} elements",
                self.nodes[loss.0].value.numel()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, add_len: usize, add: impl Fn(&mut [f64])) {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; add_len]);
            add(slot);
        }
        fn acc_slice(grads: &mut [Option<Vec<f64>>], v: Var, add: &[f64]) {
            acc(grads, v, add.len(), |slot| {
                for (s, a) in slot.iter_mut().zip(add) {
                    *s += *a;
                }
            });
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            {
                let node = &self.nodes[i];
                let dy = || {
                    let (n, c, h, w) = node.value.shape();
                    Tensor::new(n, c, h, w, g.clone()).expect("gradient matches value shape")
                };
                match &node.op {
                    Op::Leaf => {}
                    Op::Conv2d { x, w, b, mode, stride } => {
                        let (dx, dw, db) = ops::conv2d_backward(
                            &self.nodes[x.0].value,
                            &self.nodes[w.0].value,
                            *mode,
                            *stride,
                            &dy(),
                        )?;
                        acc_slice(&mut grads, *x, dx.data());
                        acc_slice(&mut grads, *w, dw.data());
                        acc_slice(&mut grads, *b, db.data());
                    }
                    Op::Relu { x } => {
                        let dx = ops::relu_backward(&node.value, &g);
                        acc_slice(&mut grads, *x, &dx);
                    }
                    Op::MaxPool2 { x, argmax } => {
                        let dx =
                            ops::maxpool2_backward(self.nodes[x.0].value.numel(), argmax, &g);
                        acc_slice(&mut grads, *x, &dx);
                    }
                    Op::BnTrain {
                        x,
                        gamma,
                        beta,
                        mean,
                        inv_std,
                    } => {
                        let (dx, dgamma, dbeta) = ops::bn_backward_train(
                            &self.nodes[x.0].value,
                            &self.nodes[gamma.0].value,
                            mean,
                            inv_std,
                            &dy(),
                        );
                        acc_slice(&mut grads, *x, dx.data());
                        acc_slice(&mut grads, *gamma, dgamma.data());
                        acc_slice(&mut grads, *beta, dbeta.data());
                    }
                    Op::BnEval {
                        x,
                        gamma,
                        beta,
                        mean,
                        inv_std,
                    } => {
                        let (dx, dgamma, dbeta) = ops::bn_backward_eval(
                            &self.nodes[x.0].value,
                            &self.nodes[gamma.0].value,
                            mean,
                            inv_std,
                            &dy(),
                        );
                        acc_slice(&mut grads, *x, dx.data());
                        acc_slice(&mut grads, *gamma, dgamma.data());
                        acc_slice(&mut grads, *beta, dbeta.data());
                    }
                    Op::Linear { x, w, b } => {
                        let (dx, dw, db) = ops::linear_backward(
                            &self.nodes[x.0].value,
                            &self.nodes[w.0].value,
                            &dy(),
                        );
                        acc_slice(&mut grads, *x, dx.data());
                        acc_slice(&mut grads, *w, dw.data());
                        acc_slice(&mut grads, *b, db.data());
                    }
                    Op::Gap { x } => {
                        let dx = ops::gap_backward(&self.nodes[x.0].value, &dy());
                        acc_slice(&mut grads, *x, dx.data());
                    }
                    Op::Bilinear { x, align } => {
                        let dx = ops::bilinear_backward(&self.nodes[x.0].value, &dy(), *align);
                        acc_slice(&mut grads, *x, dx.data());
                    }
                    Op::Sigmoid { x } => {
                        let dx = ops::sigmoid_backward(&node.value, &g);
                        acc_slice(&mut grads, *x, &dx);
                    }
                    Op::Add { a, b } => {
                        acc_slice(&mut grads, *a, &g);
                        acc_slice(&mut grads, *b, &g);
                    }
                    Op::ConcatC { xs, splits } => {
                        let parts = ops::concat_c_backward(&dy(), splits);
                        for (v, p) in xs.iter().zip(&parts) {
                            acc_slice(&mut grads, *v, p.data());
                        }
                    }
                    Op::SoftmaxCe {
                        logits,
                        labels,
                        probs,
                    } => {
                        let d = ops::softmax_ce_backward(probs, labels, g[0]);
                        acc_slice(&mut grads, *logits, d.data());
                    }
                    Op::PixelCe {
                        logits,
                        labels,
                        probs,
                    } => {
                        let d = ops::pixel_ce_backward(probs, labels, g[0]);
                        acc_slice(&mut grads, *logits, d.data());
                    }
                    Op::Mse { pred, target } => {
                        let d = ops::mse_backward(&self.nodes[pred.0].value, target, g[0]);
                        acc_slice(&mut grads, *pred, d.data());
                    }
                }
            }
            match &mut self.nodes[i].grad {
                Some(sg) => {
                    for (s, a) in sg.iter_mut().zip(&g) {
                        *s += *a;
                    }
                }
                None => self.nodes[i].grad = Some(g),
            }
        }
        Ok(())
    }

    /// Move every bound parameter's gradient off the tape into the matching
    /// `Param`. Bindings without a gradient are a wiring bug.
    pub fn pull_grads(&mut self, params: &mut [&mut Param]) -> Result<()> {
        let bindings = std::mem::take(&mut self.bindings);
        for (name, var) in bindings {
            let Some(p) = params.iter_mut().find(|p| p.name == name) else {
                return Err(Error::contract(format!(
                    "tape holds a binding for unknown parameter {name:?}"
                )));
            };
            let Some(g) = self.nodes[var.0].grad.take() else {
                return Err(Error::contract(format!(
                    "parameter {name:?} was bound but received no gradient"
                )));
            };
            p.accumulate_grad(&g);
        }
        Ok(())
    }
}
