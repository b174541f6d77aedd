//! Stage sweep: one backbone, readouts trained from each stage alone and
//! from all stages together.

use padlab_core::Result;

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::{BackboneKind, RunConfig};
use crate::experiments::probe;

pub struct StageScore {
    /// "1".."4" for single taps, "all" for the combined readout.
    pub stage: String,
    pub spc: f64,
    pub mae: f64,
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<StageScore>> {
    let mut c = cfg.clone();
    c.probe.backbone = BackboneKind::Vgg5;
    let backbone = probe::resolve_backbone(&c)?;
    let source = probe::feature_source(&c, backbone.as_ref())?;
    let mut out = Vec::new();
    for tap in 1..=source.widths.len() {
        let result = probe::train_probe_on(&source, &[tap], &c)?;
        out.push(StageScore { stage: tap.to_string(), spc: result.spc, mae: result.mae });
    }
    let all: Vec<usize> = (1..=source.widths.len()).collect();
    let result = probe::train_probe_on(&source, &all, &c)?;
    out.push(StageScore { stage: "all".to_string(), spc: result.spc, mae: result.mae });
    Ok(out)
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<StageScore>> {
    let scores = sweep(cfg)?;
    let rows: Vec<String> = scores
        .iter()
        .map(|s| format!("{},{},{}", s.stage, fmt_metric(s.spc), fmt_metric(s.mae)))
        .collect();
    dir.write_csv("stage_sweep.csv", "stage,spc,mae", &rows)?;
    dir.log(&format!("stage sweep finished with {} rows", scores.len()))?;
    Ok(scores)
}
