//! Experiment harness around the core engine: config files, seeded runs,
//! CSV/PGM/checkpoint artifacts, and cross-run reports.

pub mod artifacts;
pub mod config;
pub mod data;
pub mod experiments;
pub mod train;

use padlab_core::models::Task;
use padlab_core::Result;

use artifacts::{fmt_metric, RunDir};
use config::{Experiment, RunConfig};

/// Run one experiment end to end: create the output directory, echo the
/// config, produce every artifact. Returns the text the CLI prints.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    let dir = RunDir::create(&cfg.out)?;
    dir.write_echo(cfg)?;
    dir.log(&format!("start {}", cfg.experiment.as_str()))?;
    let text = match cfg.experiment {
        Experiment::Probe => {
            let r = experiments::probe::run(cfg, &dir)?;
            format!("probe spc {} mae {}\n", fmt_metric(r.spc), fmt_metric(r.mae))
        }
        Experiment::PadCompare => {
            let scores = experiments::pad_compare::run(cfg, &dir)?;
            scores
                .iter()
                .map(|s| format!("{} spc {}\n", s.mode.as_str(), fmt_metric(s.spc)))
                .collect()
        }
        Experiment::StageSweep => {
            let scores = experiments::stage_sweep::run(cfg, &dir)?;
            scores
                .iter()
                .map(|s| format!("stage {} spc {}\n", s.stage, fmt_metric(s.spc)))
                .collect()
        }
        Experiment::GridClassify => {
            let r = experiments::grid::run(cfg, &dir, Task::Classify)?;
            format!("grid-classify acc {}\n", fmt_metric(r.overall))
        }
        Experiment::GridSegment => {
            let r = experiments::grid::run(cfg, &dir, Task::Segment)?;
            format!("grid-segment miou {}\n", fmt_metric(r.overall))
        }
        Experiment::DistToBorder => {
            let r = experiments::dist_to_border::run(cfg, &dir)?;
            format!("border-ring diff {}\n", fmt_metric(r.diff(0)))
        }
        Experiment::RingRegion => {
            let r = experiments::ring_region::run(cfg, &dir)?;
            format!("ring-region overall miou {}\n", fmt_metric(r.overall))
        }
        Experiment::Dimest => {
            let r = experiments::dimest_run::run(cfg, &dir)?;
            format!(
                "dims location {} class {} residual {} of {}\n",
                r.report.alloc[0], r.report.alloc[1], r.report.alloc[2], r.report.n
            )
        }
        Experiment::ReachMap => {
            let r = experiments::reach::run(cfg, &dir)?;
            format!("reach mean {}\n", fmt_metric(r.mean))
        }
        Experiment::Report => experiments::report::run(cfg, &dir)?,
    };
    dir.log(&format!("done {}", cfg.experiment.as_str()))?;
    Ok(text)
}
