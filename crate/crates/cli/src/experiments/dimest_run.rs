//! Latent dimensionality split: how many of a grid net's latent dimensions
//! track location, class, or neither, measured by paired correlation.

use padlab_core::checkpoint;
use padlab_core::dimest::{factor_correlation, sample_pairs, Factor, FactorReport, PairSpec};
use padlab_core::models::build_gridnet;
use padlab_core::synth::Normalize;
use padlab_core::{derive_seed, Result};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::RunConfig;
use crate::data::{load_images, Split};
use crate::experiments::grid;

pub struct DimestOutcome {
    pub c_location: f64,
    pub c_class: f64,
    pub c_residual: f64,
    pub report: FactorReport,
}

/// Score the three factors for an already-trained net state.
pub fn analyze(cfg: &RunConfig, state: &[(String, padlab_core::Tensor)]) -> Result<DimestOutcome> {
    let mut model = build_gridnet(&grid::net_spec(cfg, cfg.dimest.task), 0)?;
    model.load_state(state)?;
    let model = model;

    let patches = load_images(&cfg.data, cfg.data.patch, Split::Val, cfg.seed)?;
    let spec = PairSpec {
        k: cfg.grid.k,
        patch: cfg.data.patch,
        canvases: cfg.dimest.canvases.clone(),
        norm: Normalize::dataset(),
    };
    let score = |factor: Factor, tag: &str| -> Result<f64> {
        let batch = sample_pairs(
            factor,
            &patches,
            &spec,
            cfg.dimest.pairs,
            derive_seed(cfg.seed, tag),
        )?;
        factor_correlation(|t| model.latent(t), &batch)
    };
    let c_location = score(Factor::Location, "pairs-location")?;
    let c_class = score(Factor::Class, "pairs-class")?;
    let c_residual = score(Factor::Residual, "pairs-residual")?;

    let probe = sample_pairs(Factor::Class, &patches, &spec, 1, derive_seed(cfg.seed, "probe"))?;
    let n = model.latent(&probe.pairs[0].0)?.len();
    let report = FactorReport::from_scores(c_location, c_class, c_residual, n)?;
    Ok(DimestOutcome { c_location, c_class, c_residual, report })
}

/// Load or train the subject net, then analyze it.
pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<DimestOutcome> {
    let state = if cfg.dimest.checkpoint.is_empty() {
        dir.log("no checkpoint given, training a fresh grid net")?;
        grid::train_outcome(cfg, cfg.dimest.task)?.state
    } else {
        checkpoint::load(cfg.dimest.checkpoint.as_ref())?
    };
    let out = analyze(cfg, &state)?;

    let canvases = cfg
        .dimest
        .canvases
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let row = format!(
        "{},{},{},{},{},{},{},{},{}",
        cfg.seed,
        cfg.model.padding.as_str(),
        canvases,
        cfg.dimest.task.as_str(),
        fmt_metric(out.c_location),
        fmt_metric(out.c_class),
        fmt_metric(out.c_residual),
        fmt_metric(out.report.pct(0)),
        fmt_metric(out.report.pct(1)),
    );
    dir.write_csv(
        "dimest.csv",
        "run_id,padding,canvas,task,c_loc,c_class,c_res,pct_loc,pct_class",
        &[row],
    )?;
    dir.log(&format!(
        "alloc location {} class {} residual {}",
        out.report.alloc[0], out.report.alloc[1], out.report.alloc[2]
    ))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn fresh_training_yields_a_full_allocation() {
        let mut cfg = RunConfig::default_for(Experiment::Dimest);
        cfg.data.train_n = 12;
        cfg.data.val_n = 9;
        cfg.data.patch = 6;
        cfg.data.classes = 2;
        cfg.grid.k = 3;
        cfg.optim.epochs = 1;
        cfg.dimest.pairs = 16;
        let dir = RunDir::create(
            &std::env::temp_dir().join(format!("padlab-dimest-{}", std::process::id())),
        )
        .unwrap();
        let out = run(&cfg, &dir).unwrap();
        let total: usize = out.report.alloc.iter().sum();
        assert!(total <= out.report.n, "allocation cannot exceed the budget");
        assert!(out.report.n >= 3, "latent budget should fit three factors");
        let csv = std::fs::read_to_string(dir.file("dimest.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2, "header plus one row");
        let _ = std::fs::remove_dir_all(dir.path());
    }
}
