//! Padding-type sweep: train one backbone per border mode, probe each with
//! the same readout recipe, and tabulate held-out SPC/MAE per mode.

use padlab_core::border::PadKind;
use padlab_core::Result;

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::{BackboneKind, RunConfig};
use crate::experiments::probe;

pub struct ModeScore {
    pub mode: PadKind,
    pub spc: f64,
    pub mae: f64,
}

/// One backbone + probe per mode, identical seeds and data throughout.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<ModeScore>> {
    let mut out = Vec::with_capacity(cfg.compare.modes.len());
    for &mode in &cfg.compare.modes {
        let mut c = cfg.clone();
        c.model.padding = mode;
        c.probe.backbone = BackboneKind::Vgg5;
        let backbone = probe::resolve_backbone(&c)?;
        let source = probe::feature_source(&c, backbone.as_ref())?;
        let result = probe::train_probe_on(&source, &c.probe.taps, &c)?;
        out.push(ModeScore { mode, spc: result.spc, mae: result.mae });
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<ModeScore>> {
    let scores = sweep(cfg)?;
    let rows: Vec<String> = scores
        .iter()
        .map(|s| format!("{},{},{}", s.mode.as_str(), fmt_metric(s.spc), fmt_metric(s.mae)))
        .collect();
    dir.write_csv("pad_compare.csv", "mode,spc,mae", &rows)?;
    for s in &scores {
        dir.log(&format!("mode {} spc {}", s.mode.as_str(), fmt_metric(s.spc)))?;
    }
    Ok(scores)
}
