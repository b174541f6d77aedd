//! Position probe: a 3x3 sigmoid readout trained to regress a coordinate
//! pattern from fixed features, scored by rank correlation on held-out
//! images. The backbone is optional; without one the probe reads the image.

use padlab_core::checkpoint;
use padlab_core::metrics::{mae, spearman};
use padlab_core::models::{build_probe, build_vgg5, PosProbe, Vgg5, VGG5_WIDTHS};
use padlab_core::ops::{bilinear_forward, BilinearAlign};
use padlab_core::synth::{gen_position_target, Normalize};
use padlab_core::{derive_seed, sgd_step, Error, PaddingMode, Result, SgdConfig, Tape, Tensor};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::{BackboneKind, RunConfig};
use crate::data::{load_images, probe_inputs, stack, Split};
use crate::train::{shuffled, train_classifier};

/// Per-stage feature tensors for every probe image, extracted once.
pub struct FeatureSource {
    pub widths: Vec<usize>,
    pub train: Vec<Vec<Tensor>>,
    pub val: Vec<Vec<Tensor>>,
    /// Side of the probe input images the features came from.
    pub input_side: usize,
}

pub struct ProbeResult {
    /// (epoch, train loss, held-out spc, held-out mae) per epoch.
    pub rows: Vec<(usize, f64, f64, f64)>,
    pub spc: f64,
    pub mae: f64,
    /// Final prediction for the first held-out image.
    pub pred: Tensor,
    pub target: Tensor,
    pub state: Vec<(String, Tensor)>,
}

/// Train a backbone according to the config, or load one from a checkpoint.
pub fn resolve_backbone(cfg: &RunConfig) -> Result<Option<Vgg5>> {
    if cfg.probe.backbone == BackboneKind::None {
        return Ok(None);
    }
    let mut net = build_vgg5(
        cfg.data.classes,
        cfg.model.padding_mode(),
        derive_seed(cfg.seed, "backbone"),
    )?;
    if !cfg.probe.backbone_ckpt.is_empty() {
        let entries = checkpoint::load(cfg.probe.backbone_ckpt.as_ref())?;
        net.load_state(&entries)?;
        return Ok(Some(net));
    }
    let side = net.fit_input_side(cfg.data.image_side);
    let norm = Normalize::dataset();
    let train: Vec<(Tensor, usize)> = load_images(&cfg.data, side, Split::Train, cfg.seed)?
        .into_iter()
        .map(|(t, l)| Ok((norm.apply(&t)?, l)))
        .collect::<Result<_>>()?;
    let mut optim = cfg.optim.clone();
    optim.epochs = cfg.probe.backbone_epochs;
    train_classifier(&mut net, &train, &optim, derive_seed(cfg.seed, "backbone-train"), |_, _, _| {
        Ok(())
    })?;
    Ok(Some(net))
}

/// Extract per-image features for the probe train and held-out sets.
pub fn feature_source(cfg: &RunConfig, backbone: Option<&Vgg5>) -> Result<FeatureSource> {
    let norm = Normalize::dataset();
    let side = match backbone {
        Some(net) => net.fit_input_side(cfg.data.image_side),
        None => cfg.data.image_side,
    };
    let extract = |images: Vec<Tensor>| -> Result<Vec<Vec<Tensor>>> {
        images
            .into_iter()
            .map(|img| match backbone {
                Some(net) => net.stage_features(&img),
                None => Ok(vec![img]),
            })
            .collect()
    };
    let train_imgs = probe_inputs(
        &cfg.probe,
        cfg.data.train_n,
        side,
        &norm,
        derive_seed(cfg.seed, "probe-train"),
    )?;
    let val_imgs = probe_inputs(
        &cfg.probe,
        cfg.data.val_n,
        side,
        &norm,
        derive_seed(cfg.seed, "probe-val"),
    )?;
    Ok(FeatureSource {
        widths: match backbone {
            Some(_) => VGG5_WIDTHS.to_vec(),
            None => vec![3],
        },
        train: extract(train_imgs)?,
        val: extract(val_imgs)?,
        input_side: side,
    })
}

/// Train a readout on the given stage taps and score it on the held-out set.
pub fn train_probe_on(
    source: &FeatureSource,
    taps: &[usize],
    cfg: &RunConfig,
) -> Result<ProbeResult> {
    let readout_mode = PaddingMode::zero(cfg.probe.readout_pad);
    let mut probe = build_probe(
        &source.widths,
        taps,
        cfg.probe.align,
        readout_mode,
        derive_seed(cfg.seed, "readout"),
    )?;
    let out = probe.out_size()?;
    let target_full = gen_position_target(
        cfg.probe.pattern,
        source.input_side,
        source.input_side,
        cfg.probe.stripes,
    )?;
    let target = bilinear_forward(&target_full, out, out, BilinearAlign::Center)?;

    // The features are frozen, so the aligned readout input never changes
    // across epochs; resize and concatenate once per image.
    let aligned_train: Vec<Tensor> = source
        .train
        .iter()
        .map(|f| probe.aligned_concat(f))
        .collect::<Result<_>>()?;
    let aligned_val: Vec<Tensor> = source
        .val
        .iter()
        .map(|f| probe.aligned_concat(f))
        .collect::<Result<_>>()?;

    let sgd = SgdConfig {
        lr: cfg.optim.lr,
        momentum: cfg.optim.momentum,
        weight_decay: cfg.optim.weight_decay,
    };
    let mut rows = Vec::with_capacity(cfg.optim.epochs);
    for epoch in 0..cfg.optim.epochs {
        let order = shuffled(
            aligned_train.len(),
            derive_seed(cfg.seed, &format!("probe-shuffle{epoch}")),
        );
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.optim.batch.max(1)) {
            let refs: Vec<&Tensor> = chunk.iter().map(|&i| &aligned_train[i]).collect();
            let x = stack(&refs)?;
            let t_refs: Vec<&Tensor> = (0..chunk.len()).map(|_| &target).collect();
            let t_batch = stack(&t_refs)?;
            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let pred = probe.forward_train(&mut tape, xv)?;
            let loss = tape.mse(pred, &t_batch)?;
            loss_sum += tape.value(loss).at(0, 0, 0, 0);
            batches += 1;
            tape.backward(loss)?;
            tape.pull_grads(&mut probe.params_mut())?;
            sgd_step(&mut probe.params_mut(), &sgd)?;
        }
        let (spc, err) = held_out_scores(&probe, &aligned_val, &target)?;
        rows.push((epoch, loss_sum / batches as f64, spc, err));
    }

    let (_, _, spc, err) = *rows.last().ok_or_else(|| {
        Error::argument("probe training needs at least one epoch".to_string())
    })?;
    let pred = probe.infer(&aligned_val[0])?;
    let state = probe
        .readout
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    Ok(ProbeResult { rows, spc, mae: err, pred, target, state })
}

/// Mean per-image rank correlation and absolute error on held-out images.
fn held_out_scores(probe: &PosProbe, aligned_val: &[Tensor], target: &Tensor) -> Result<(f64, f64)> {
    if aligned_val.is_empty() {
        return Err(Error::argument("held-out set is empty".to_string()));
    }
    let gt = target.plane(0, 0);
    let mut spc_sum = 0.0;
    let mut mae_sum = 0.0;
    for aligned in aligned_val {
        let pred = probe.infer(aligned)?;
        let p = pred.plane(0, 0);
        spc_sum += spearman(p, gt)?;
        mae_sum += mae(p, gt)?;
    }
    Ok((spc_sum / aligned_val.len() as f64, mae_sum / aligned_val.len() as f64))
}

/// Full experiment: backbone, features, readout training, artifacts.
pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<ProbeResult> {
    let backbone = resolve_backbone(cfg)?;
    dir.log(&format!(
        "backbone {}",
        if backbone.is_some() { "vgg5" } else { "none" }
    ))?;
    let source = feature_source(cfg, backbone.as_ref())?;
    let taps: Vec<usize> = if backbone.is_some() {
        cfg.probe.taps.clone()
    } else {
        vec![1]
    };
    let result = train_probe_on(&source, &taps, cfg)?;

    let rows: Vec<String> = result
        .rows
        .iter()
        .map(|(e, loss, spc, err)| {
            format!("{e},{},{},{}", fmt_metric(*loss), fmt_metric(*spc), fmt_metric(*err))
        })
        .collect();
    dir.write_csv("probe_metrics.csv", "epoch,loss,spc,mae", &rows)?;
    let side = result.pred.h();
    dir.write_heatmap("pred.pgm", side, side, result.pred.plane(0, 0))?;
    dir.write_heatmap("target.pgm", side, side, result.target.plane(0, 0))?;
    dir.save_checkpoint("readout.ckpt", &result.state)?;
    dir.log(&format!(
        "probe done spc {} mae {}",
        fmt_metric(result.spc),
        fmt_metric(result.mae)
    ))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default_for(Experiment::Probe);
        cfg.data.train_n = 12;
        cfg.data.val_n = 4;
        cfg.data.image_side = 20;
        cfg.probe.align = 12;
        cfg.optim.epochs = 2;
        cfg
    }

    #[test]
    fn probe_without_backbone_reads_the_image() {
        let cfg = tiny_cfg();
        let source = feature_source(&cfg, None).unwrap();
        assert_eq!(source.widths, vec![3]);
        assert_eq!(source.train.len(), 12);
        assert_eq!(source.train[0][0].shape(), (1, 3, 20, 20));
        let result = train_probe_on(&source, &[1], &cfg).unwrap();
        assert_eq!(result.rows.len(), 2, "one row per epoch");
        assert!(result.spc.abs() <= 1.0, "spc is a correlation");
        assert_eq!(result.pred.shape(), (1, 1, 10, 10), "3x3 readout shrinks 12 to 10");
    }

    #[test]
    fn readout_padding_grows_the_output() {
        let mut cfg = tiny_cfg();
        cfg.probe.readout_pad = 2;
        let source = feature_source(&cfg, None).unwrap();
        let result = train_probe_on(&source, &[1], &cfg).unwrap();
        assert_eq!(result.pred.shape(), (1, 1, 14, 14), "pad 2 grows 12 to 14");
    }

    #[test]
    fn deterministic_given_config_and_seed() {
        let cfg = tiny_cfg();
        let a = train_probe_on(&feature_source(&cfg, None).unwrap(), &[1], &cfg).unwrap();
        let b = train_probe_on(&feature_source(&cfg, None).unwrap(), &[1], &cfg).unwrap();
        assert_eq!(a.rows, b.rows, "identical config and seed, identical history");
        assert_eq!(a.pred, b.pred);
    }
}
