//! Six-block conv net for grid-composed samples, with a classification or
//! dense-labeling head, optional residual shortcuts, and an optional
//! receptive-field cutoff.

use crate::border::{self, PaddingMode};
use crate::error::{Error, Result};
use crate::models::layers::{theoretical_rf, BatchNorm2d, Conv2d, Linear};
use crate::models::vgg::{find_entry, load_into};
use crate::ops::{self, BilinearAlign};
use crate::optim::Param;
use crate::rng::rng_from;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const GRIDNET_WIDTHS: [usize; 6] = [32, 32, 32, 64, 64, 128];
pub const GRIDNET_STRIDES: [usize; 6] = [1, 2, 1, 2, 1, 2];
/// 0-based blocks eligible for a shortcut: stride 1, width preserved.
const RESIDUAL_BLOCKS: [usize; 2] = [2, 4];
const GRID_KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classify,
    Segment,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Segment => "segment",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "classify" => Ok(Task::Classify),
            "segment" => Ok(Task::Segment),
            other => Err(Error::parse(format!(
                "unknown task {other:?}, expected classify|segment"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridNetSpec {
    pub task: Task,
    /// Object classes. The dense head adds a background channel.
    pub classes: usize,
    pub mode: PaddingMode,
    pub residual: bool,
    pub batchnorm: bool,
    /// Blocks past this 1-based depth shrink to 1x1 kernels, freezing the
    /// receptive field while keeping depth and strides.
    pub rf_limit: Option<usize>,
}

struct GridBlock {
    conv: Conv2d,
    bn: Option<BatchNorm2d>,
    residual: bool,
}

enum Head {
    Fc(Linear),
    Seg(Conv2d),
}

pub struct GridNet {
    pub task: Task,
    pub classes: usize,
    blocks: Vec<GridBlock>,
    head: Head,
}

pub fn build_gridnet(spec: &GridNetSpec, seed: u64) -> Result<GridNet> {
    if spec.classes < 2 {
        return Err(Error::argument(format!(
            "grid tasks need at least 2 classes, got {}",
            spec.classes
        )));
    }
    let mut rng = rng_from(seed);
    let mut blocks = Vec::with_capacity(GRIDNET_WIDTHS.len());
    let mut ci = 3;
    for (i, (&co, &stride)) in GRIDNET_WIDTHS.iter().zip(&GRIDNET_STRIDES).enumerate() {
        let name = format!("b{}", i + 1);
        let cut = spec.rf_limit.is_some_and(|d| i + 1 > d);
        let (kernel, mode) = if cut {
            (1, PaddingMode::none())
        } else {
            (GRID_KERNEL, spec.mode)
        };
        let conv = Conv2d::new(&format!("{name}.conv"), ci, co, kernel, mode, stride, &mut rng);
        let bn = spec
            .batchnorm
            .then(|| BatchNorm2d::new(&format!("{name}.bn"), co));
        let residual = spec.residual && RESIDUAL_BLOCKS.contains(&i);
        blocks.push(GridBlock { conv, bn, residual });
        ci = co;
    }
    let last = *GRIDNET_WIDTHS.last().unwrap();
    let head = match spec.task {
        Task::Classify => Head::Fc(Linear::new("fc", last, spec.classes, &mut rng)),
        Task::Segment => Head::Seg(Conv2d::new(
            "seg",
            last,
            spec.classes + 1,
            1,
            PaddingMode::none(),
            1,
            &mut rng,
        )),
    };
    Ok(GridNet {
        task: spec.task,
        classes: spec.classes,
        blocks,
        head,
    })
}

impl GridNet {
    /// Spatial size after each block.
    pub fn check_geometry(&self, side: usize) -> Result<Vec<usize>> {
        let mut s = side;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let k = b.conv.kernel();
            let (h, _) = border::conv_out_size(s, s, k, k, b.conv.mode.rings(), b.conv.stride)
                .map_err(|e| Error::geometry(format!("block {}: {e}", i + 1)))?;
            s = h;
            out.push(s);
        }
        Ok(out)
    }

    /// Receptive field and stride product of the block stack.
    pub fn receptive_field(&self) -> (usize, usize) {
        let layers: Vec<(usize, usize)> = self
            .blocks
            .iter()
            .map(|b| (b.conv.kernel(), b.conv.stride))
            .collect();
        theoretical_rf(&layers)
    }

    /// Layer geometry for border-reach analysis.
    pub fn reach_layers(&self) -> Vec<border::ReachLayer> {
        self.blocks
            .iter()
            .map(|b| border::ReachLayer {
                kernel: b.conv.kernel(),
                stride: b.conv.stride,
                amount: b.conv.mode.rings(),
            })
            .collect()
    }

    fn block_train(&mut self, tape: &mut Tape, x: Var, i: usize) -> Result<Var> {
        let b = &mut self.blocks[i];
        let mut y = b.conv.forward(tape, x)?;
        if let Some(bn) = &mut b.bn {
            y = bn.forward_train(tape, y)?;
        }
        let mut y = tape.relu(y);
        if b.residual {
            let (_, _, yh, yw) = tape.value(y).shape();
            let (_, _, xh, xw) = tape.value(x).shape();
            let s = if (xh, xw) == (yh, yw) {
                x
            } else {
                tape.bilinear(x, yh, yw, BilinearAlign::Center)?
            };
            y = tape.add(y, s)?;
        }
        Ok(y)
    }

    /// Logits on the tape: (n, classes, 1, 1) for classification,
    /// (n, classes+1, h, w) at input size for dense labels.
    pub fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let (_, _, in_h, in_w) = tape.value(x).shape();
        let mut h = x;
        for i in 0..self.blocks.len() {
            h = self.block_train(tape, h, i)?;
        }
        match &mut self.head {
            Head::Fc(fc) => {
                let g = tape.gap(h);
                fc.forward(tape, g)
            }
            Head::Seg(seg) => {
                let y = seg.forward(tape, h)?;
                tape.bilinear(y, in_h, in_w, BilinearAlign::Center)
            }
        }
    }

    /// Last block output, batch-statistics frozen.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &self.blocks {
            let mut y = b.conv.infer(&h)?;
            if let Some(bn) = &b.bn {
                y = bn.infer(&y)?;
            }
            let mut y = ops::relu_forward(&y);
            if b.residual {
                let s = if (h.h(), h.w()) == (y.h(), y.w()) {
                    h
                } else {
                    ops::bilinear_forward(&h, y.h(), y.w(), BilinearAlign::Center)?
                };
                y = ops::add_forward(&y, &s)?;
            }
            h = y;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.features(x)?;
        match &self.head {
            Head::Fc(fc) => fc.infer(&ops::gap_forward(&h)),
            Head::Seg(seg) => {
                let y = seg.infer(&h)?;
                ops::bilinear_forward(&y, x.h(), x.w(), BilinearAlign::Center)
            }
        }
    }

    /// Spatial mean of the last block output for a single image.
    pub fn latent(&self, x: &Tensor) -> Result<Vec<f64>> {
        if x.n() != 1 {
            return Err(Error::argument(format!(
                "latent wants a single image, got a batch of {}",
                x.n()
            )));
        }
        Ok(ops::gap_forward(&self.features(x)?).into_data())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        for b in &mut self.blocks {
            ps.extend(b.conv.params_mut());
            if let Some(bn) = &mut b.bn {
                ps.extend(bn.params_mut());
            }
        }
        match &mut self.head {
            Head::Fc(fc) => ps.extend(fc.params_mut()),
            Head::Seg(seg) => ps.extend(seg.params_mut()),
        }
        ps
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        for b in &self.blocks {
            ps.extend(b.conv.params());
            if let Some(bn) = &b.bn {
                ps.extend(bn.params());
            }
        }
        match &self.head {
            Head::Fc(fc) => ps.extend(fc.params()),
            Head::Seg(seg) => ps.extend(seg.params()),
        }
        ps
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(bn) = &b.bn {
                out.extend(bn.buffers(&format!("b{}.bn", i + 1)));
            }
        }
        out
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        load_into(entries, self.params_mut())?;
        for (i, b) in self.blocks.iter_mut().enumerate() {
            if let Some(bn) = &mut b.bn {
                let name = format!("b{}.bn", i + 1);
                let mean = find_entry(entries, &format!("{name}.run_mean"))?;
                let var = find_entry(entries, &format!("{name}.run_var"))?;
                bn.set_buffers(mean, var)?;
            }
        }
        Ok(())
    }
}
