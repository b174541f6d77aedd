//! Distance-to-border comparison: the configured padded classifier against
//! an unpadded twin, accuracy aggregated by ring distance.

use padlab_core::border::PadKind;
use padlab_core::metrics::RingReport;
use padlab_core::models::Task;
use padlab_core::{Error, Result};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::RunConfig;
use crate::experiments::grid;

#[derive(Clone, Debug)]
pub struct BorderOutcome {
    pub padded: RingReport,
    pub nopad: RingReport,
}

impl BorderOutcome {
    /// Unpadded minus padded accuracy per ring.
    pub fn diff(&self, d: usize) -> f64 {
        self.nopad.mean(d) - self.padded.mean(d)
    }
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<BorderOutcome> {
    if cfg.model.padding == PadKind::None {
        return Err(Error::argument(
            "dist-to-border compares a padded net against an unpadded one; \
             set [model] padding to a padded mode"
                .to_string(),
        ));
    }
    let padded = grid::train_outcome(cfg, Task::Classify)?;
    dir.log(&format!("padded acc {}", fmt_metric(padded.overall)))?;
    let mut bare = cfg.clone();
    bare.model.padding = PadKind::None;
    let nopad = grid::train_outcome(&bare, Task::Classify)?;
    dir.log(&format!("unpadded acc {}", fmt_metric(nopad.overall)))?;

    let write_rings = |name: &str, rings: &RingReport| -> Result<()> {
        let rows: Vec<String> = (0..rings.rings())
            .map(|d| format!("{d},{},{}", rings.count(d), fmt_metric(rings.mean(d))))
            .collect();
        dir.write_csv(name, "d,count,mean", &rows)
    };
    write_rings("rings_padded.csv", &padded.rings)?;
    write_rings("rings_nopad.csv", &nopad.rings)?;

    let out = BorderOutcome { padded: padded.rings, nopad: nopad.rings };
    let rows: Vec<String> = (0..out.padded.rings())
        .map(|d| {
            format!(
                "{d},{},{},{},{}",
                out.padded.count(d),
                fmt_metric(out.nopad.mean(d)),
                fmt_metric(out.padded.mean(d)),
                fmt_metric(out.diff(d))
            )
        })
        .collect();
    dir.write_csv("ring_diff.csv", "d,count,nopad,padded,diff", &rows)?;
    Ok(out)
}
