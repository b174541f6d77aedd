//! Reach map: for each canvas pixel, how many final-layer units both see it
//! and carry border-pad signal. A picture of where padding can act.

use padlab_core::border::positional_reach;
use padlab_core::models::build_gridnet;
use padlab_core::Result;

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::RunConfig;
use crate::experiments::grid;

pub struct ReachOutcome {
    pub side: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<ReachOutcome> {
    let model = build_gridnet(&grid::net_spec(cfg, cfg.dimest.task), 0)?;
    let side = cfg.grid.k * cfg.data.patch;
    model.check_geometry(side)?;
    let map = positional_reach(&model.reach_layers(), side, side)?;

    let data = map.plane(0, 0);
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = data.iter().sum::<f64>() / data.len() as f64;

    dir.write_heatmap("reach.pgm", side, side, data)?;
    dir.write_csv(
        "reach.csv",
        "side,min,max,mean",
        &[format!("{side},{},{},{}", fmt_metric(min), fmt_metric(max), fmt_metric(mean))],
    )?;
    dir.log(&format!("reach map {side}x{side} mean {}", fmt_metric(mean)))?;
    Ok(ReachOutcome { side, min, max, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;
    use padlab_core::border::PadKind;

    #[test]
    fn unpadded_nets_have_an_all_zero_reach_map() {
        let mut cfg = RunConfig::default_for(Experiment::ReachMap);
        cfg.model.padding = PadKind::None;
        cfg.grid.k = 3;
        cfg.data.patch = 10;
        let dir = RunDir::create(
            &std::env::temp_dir().join(format!("padlab-reach-{}", std::process::id())),
        )
        .unwrap();
        let out = run(&cfg, &dir).unwrap();
        assert_eq!(out.max, 0.0, "no padding anywhere, no pad signal to spread");
        let _ = std::fs::remove_dir_all(dir.path());
    }

    #[test]
    fn padded_nets_reach_falls_toward_the_center() {
        let mut cfg = RunConfig::default_for(Experiment::ReachMap);
        cfg.grid.k = 3;
        cfg.data.patch = 10;
        let dir = RunDir::create(
            &std::env::temp_dir().join(format!("padlab-reach-pad-{}", std::process::id())),
        )
        .unwrap();
        let out = run(&cfg, &dir).unwrap();
        assert!(out.max > 0.0, "zero padding injects reachable border signal");
        assert!(dir.file("reach.pgm").is_file());
        let _ = std::fs::remove_dir_all(dir.path());
    }
}
