//! Mini-batch SGD loops and validation passes shared by the experiments.

use padlab_core::metrics::{predicted_classes, predicted_pixel_labels, IouAccum, LocationTable};
use padlab_core::models::{GridNet, Vgg5};
use padlab_core::synth::GridSample;
use padlab_core::tape::Var;
use padlab_core::{
    derive_seed, rng_from, sgd_step, Error, Param, PixelLabels, Result, SgdConfig, Tape, Tensor,
};
use rand::seq::SliceRandom;

use crate::config::OptimCfg;
use crate::data::stack;

pub trait TrainModel {
    fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
}

impl TrainModel for Vgg5 {
    fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        Vgg5::forward_train(self, tape, x)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vgg5::params_mut(self)
    }
}

impl TrainModel for GridNet {
    fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        GridNet::forward_train(self, tape, x)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        GridNet::params_mut(self)
    }
}

fn sgd_of(optim: &OptimCfg) -> SgdConfig {
    SgdConfig {
        lr: optim.lr,
        momentum: optim.momentum,
        weight_decay: optim.weight_decay,
    }
}

/// Epoch order is a pure function of (seed, epoch).
pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    idx
}

/// One SGD pass per epoch over (image, class) pairs; hands the model and
/// mean batch loss to the callback after every epoch.
pub fn train_classifier<M: TrainModel>(
    model: &mut M,
    samples: &[(Tensor, usize)],
    optim: &OptimCfg,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &mut M) -> Result<()>,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::argument("training set is empty".to_string()));
    }
    for epoch in 0..optim.epochs {
        let order = shuffled(samples.len(), derive_seed(seed, &format!("shuffle{epoch}")));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(optim.batch.max(1)) {
            let refs: Vec<&Tensor> = chunk.iter().map(|&i| &samples[i].0).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].1).collect();
            let x = stack(&refs)?;
            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let logits = model.forward_train(&mut tape, xv)?;
            let loss = tape.softmax_ce(logits, &labels)?;
            loss_sum += tape.value(loss).at(0, 0, 0, 0);
            batches += 1;
            tape.backward(loss)?;
            tape.pull_grads(&mut model.params_mut())?;
            sgd_step(&mut model.params_mut(), &sgd_of(optim))?;
        }
        on_epoch(epoch, loss_sum / batches as f64, model)?;
    }
    Ok(())
}

/// Same loop against per-pixel labels.
pub fn train_segmenter<M: TrainModel>(
    model: &mut M,
    samples: &[GridSample],
    optim: &OptimCfg,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64, &mut M) -> Result<()>,
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::argument("training set is empty".to_string()));
    }
    for epoch in 0..optim.epochs {
        let order = shuffled(samples.len(), derive_seed(seed, &format!("shuffle{epoch}")));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(optim.batch.max(1)) {
            let refs: Vec<&Tensor> = chunk.iter().map(|&i| &samples[i].image).collect();
            let x = stack(&refs)?;
            let labels = stack_seg(chunk.iter().map(|&i| &samples[i].seg))?;
            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let logits = model.forward_train(&mut tape, xv)?;
            let loss = tape.pixel_ce(logits, &labels)?;
            loss_sum += tape.value(loss).at(0, 0, 0, 0);
            batches += 1;
            tape.backward(loss)?;
            tape.pull_grads(&mut model.params_mut())?;
            sgd_step(&mut model.params_mut(), &sgd_of(optim))?;
        }
        on_epoch(epoch, loss_sum / batches as f64, model)?;
    }
    Ok(())
}

fn stack_seg<'a>(items: impl Iterator<Item = &'a PixelLabels>) -> Result<PixelLabels> {
    let mut data = Vec::new();
    let mut hw = None;
    let mut n = 0usize;
    for seg in items {
        if seg.n != 1 {
            return Err(Error::dimension("stack_seg wants single-image labels".to_string()));
        }
        match hw {
            None => hw = Some((seg.h, seg.w)),
            Some(d) if d != (seg.h, seg.w) => {
                return Err(Error::dimension("label maps differ in size".to_string()))
            }
            _ => {}
        }
        data.extend_from_slice(&seg.data);
        n += 1;
    }
    let (h, w) = hw.ok_or_else(|| Error::argument("cannot stack zero label maps".to_string()))?;
    PixelLabels::new(n, h, w, data)
}

/// Fraction of samples whose argmax logit matches the label.
pub fn classify_accuracy(
    mut logits_fn: impl FnMut(&Tensor) -> Result<Tensor>,
    samples: &[(Tensor, usize)],
    batch: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Tensor> = chunk.iter().map(|(t, _)| t).collect();
        let logits = logits_fn(&stack(&refs)?)?;
        let preds = predicted_classes(&logits);
        correct += preds
            .iter()
            .zip(chunk.iter())
            .filter(|(&p, (_, label))| p == *label)
            .count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Clone, Debug)]
pub struct GridEval {
    /// Metric over the whole validation set.
    pub overall: f64,
    /// Same metric split by grid cell.
    pub table: LocationTable,
}

fn count_correct<'a>(pairs: impl Iterator<Item = (usize, &'a GridSample)>) -> (usize, usize) {
    let mut right = 0usize;
    let mut total = 0usize;
    for (p, s) in pairs {
        right += (p == s.class_label) as usize;
        total += 1;
    }
    (right, total)
}

/// Per-cell and overall accuracy of a grid classifier.
pub fn eval_grid_classify(
    model: &GridNet,
    val: &[GridSample],
    k: usize,
    batch: usize,
) -> Result<GridEval> {
    let mut preds = Vec::with_capacity(val.len());
    for chunk in val.chunks(batch.max(1)) {
        let refs: Vec<&Tensor> = chunk.iter().map(|s| &s.image).collect();
        let logits = model.infer(&stack(&refs)?)?;
        preds.extend(predicted_classes(&logits));
    }
    let table = LocationTable::from_fn(k, |loc| {
        let (right, total) = count_correct(
            preds
                .iter()
                .copied()
                .zip(val.iter())
                .filter(|(_, s)| s.location == loc),
        );
        if total == 0 {
            return Err(Error::argument(format!(
                "validation set never visits location {loc}"
            )));
        }
        Ok(right as f64 / total as f64)
    })?;
    let (right, total) = count_correct(preds.iter().copied().zip(val.iter()));
    Ok(GridEval { overall: right as f64 / total as f64, table })
}

/// Per-cell and overall mean IoU of a grid segmenter. `num_classes` counts
/// the background label.
pub fn eval_grid_segment(
    model: &GridNet,
    val: &[GridSample],
    k: usize,
    num_classes: usize,
    batch: usize,
) -> Result<GridEval> {
    let mut overall = IouAccum::new(num_classes);
    let mut per_loc: Vec<IouAccum> = (0..k * k).map(|_| IouAccum::new(num_classes)).collect();
    for chunk in val.chunks(batch.max(1)) {
        let refs: Vec<&Tensor> = chunk.iter().map(|s| &s.image).collect();
        let logits = model.infer(&stack(&refs)?)?;
        let pred = predicted_pixel_labels(&logits);
        let plane = pred.h * pred.w;
        for (i, s) in chunk.iter().enumerate() {
            let p = &pred.data[i * plane..(i + 1) * plane];
            overall.add(p, &s.seg.data)?;
            per_loc[s.location - 1].add(p, &s.seg.data)?;
        }
    }
    let table = LocationTable::from_fn(k, |loc| {
        per_loc[loc - 1].miou().ok_or_else(|| {
            Error::argument(format!("validation set never visits location {loc}"))
        })
    })?;
    let overall = overall
        .miou()
        .ok_or_else(|| Error::argument("empty validation set".to_string()))?;
    Ok(GridEval { overall, table })
}
