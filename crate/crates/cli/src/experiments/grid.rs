//! Grid tasks: a patch pasted into one cell of a k x k canvas, classified
//! or segmented, scored per cell and per border-distance ring.

use padlab_core::metrics::{border_distance, distance_rings, LocationTable, RingReport};
use padlab_core::models::{build_gridnet, GridNet, GridNetSpec, Task};
use padlab_core::synth::{GridSpec, Normalize};
use padlab_core::{derive_seed, Result, Tensor};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::RunConfig;
use crate::data::{grid_train_set, grid_val_set, load_images, Split};
use crate::train::{eval_grid_classify, eval_grid_segment, train_classifier, train_segmenter, GridEval};

#[derive(Clone, Debug)]
pub struct GridOutcome {
    /// (epoch, train loss, held-out metric) per epoch.
    pub rows: Vec<(usize, f64, f64)>,
    /// Final held-out accuracy (classify) or mean IoU (segment).
    pub overall: f64,
    pub table: LocationTable,
    pub rings: RingReport,
    pub state: Vec<(String, Tensor)>,
}

pub fn net_spec(cfg: &RunConfig, task: Task) -> GridNetSpec {
    GridNetSpec {
        task,
        classes: cfg.data.classes,
        mode: cfg.model.padding_mode(),
        residual: cfg.model.residual,
        batchnorm: cfg.model.batchnorm,
        rf_limit: cfg.model.rf_limit_opt(),
    }
}

/// Train on the grid task and evaluate per cell. No files are touched.
pub fn train_outcome(cfg: &RunConfig, task: Task) -> Result<GridOutcome> {
    if cfg.optim.epochs == 0 {
        return Err(padlab_core::Error::argument(
            "grid training needs at least one epoch".to_string(),
        ));
    }
    let spec = GridSpec::new(cfg.grid.k, cfg.data.patch, cfg.grid.canvas)?;
    let norm = Normalize::dataset();
    let train_patches = load_images(&cfg.data, cfg.data.patch, Split::Train, cfg.seed)?;
    let val_patches = load_images(&cfg.data, cfg.data.patch, Split::Val, cfg.seed)?;
    let train_set = grid_train_set(
        &train_patches,
        &spec,
        &norm,
        cfg.data.train_n,
        derive_seed(cfg.seed, "grid-train"),
    )?;
    let val_set = grid_val_set(
        &val_patches,
        &spec,
        &norm,
        cfg.data.val_n,
        derive_seed(cfg.seed, "grid-val"),
    )?;

    let mut model = build_gridnet(&net_spec(cfg, task), derive_seed(cfg.seed, "gridnet"))?;
    model.check_geometry(spec.canvas_side())?;

    let k = cfg.grid.k;
    let batch = cfg.optim.batch;
    let nc = cfg.data.classes + 1;
    let mut rows = Vec::with_capacity(cfg.optim.epochs);
    let mut last: Option<GridEval> = None;
    let seed = derive_seed(cfg.seed, "grid-sgd");
    let mut record = |epoch: usize, loss: f64, model: &mut GridNet| -> Result<()> {
        let eval = match task {
            Task::Classify => eval_grid_classify(model, &val_set, k, batch)?,
            Task::Segment => eval_grid_segment(model, &val_set, k, nc, batch)?,
        };
        rows.push((epoch, loss, eval.overall));
        last = Some(eval);
        Ok(())
    };
    match task {
        Task::Classify => {
            let labeled: Vec<(Tensor, usize)> = train_set
                .iter()
                .map(|s| (s.image.clone(), s.class_label))
                .collect();
            train_classifier(&mut model, &labeled, &cfg.optim, seed, &mut record)?;
        }
        Task::Segment => {
            train_segmenter(&mut model, &train_set, &cfg.optim, seed, &mut record)?;
        }
    }
    let GridEval { overall, table } = last.expect("at least one epoch ran");
    let rings = distance_rings(&table);
    Ok(GridOutcome { rows, overall, table, rings, state: model.state() })
}

pub fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Classify => "acc",
        Task::Segment => "miou",
    }
}

pub fn write_artifacts(dir: &RunDir, cfg: &RunConfig, task: Task, out: &GridOutcome) -> Result<()> {
    let metric = metric_name(task);
    let rows: Vec<String> = out
        .rows
        .iter()
        .map(|(e, loss, m)| format!("{e},{},{}", fmt_metric(*loss), fmt_metric(*m)))
        .collect();
    dir.write_csv("grid_metrics.csv", &format!("epoch,loss,{metric}"), &rows)?;

    let k = cfg.grid.k;
    let loc_rows: Vec<String> = (1..=k * k)
        .map(|loc| {
            format!(
                "{loc},{},{},{},{}",
                (loc - 1) / k,
                (loc - 1) % k,
                border_distance(loc, k),
                fmt_metric(out.table.at(loc))
            )
        })
        .collect();
    dir.write_csv("location_table.csv", "location,row,col,d,value", &loc_rows)?;

    let ring_rows: Vec<String> = (0..out.rings.rings())
        .map(|d| format!("{d},{},{}", out.rings.count(d), fmt_metric(out.rings.mean(d))))
        .collect();
    dir.write_csv("rings.csv", "d,count,mean", &ring_rows)?;

    dir.write_heatmap("location_table.pgm", k, k, out.table.values())?;
    dir.save_checkpoint("model.ckpt", &out.state)?;
    dir.log(&format!("grid {} {} {}", task.as_str(), metric, fmt_metric(out.overall)))?;
    Ok(())
}

pub fn run(cfg: &RunConfig, dir: &RunDir, task: Task) -> Result<GridOutcome> {
    let out = train_outcome(cfg, task)?;
    write_artifacts(dir, cfg, task, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    pub(crate) fn tiny_cfg(k: usize) -> RunConfig {
        let mut cfg = RunConfig::default_for(Experiment::GridClassify);
        cfg.data.train_n = 16;
        cfg.data.val_n = k * k;
        cfg.data.patch = 6;
        cfg.data.classes = 2;
        cfg.grid.k = k;
        cfg.optim.epochs = 1;
        cfg
    }

    #[test]
    fn classify_outcome_has_full_tables() {
        let cfg = tiny_cfg(3);
        let out = train_outcome(&cfg, Task::Classify).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.table.values().len(), 9);
        assert_eq!(out.rings.rings(), 2, "k=3 has border and center rings");
        assert!(
            (out.rings.weighted_mean() - out.table.mean()).abs() < 1e-12,
            "ring summary must preserve the table mean"
        );
        assert!(!out.state.is_empty(), "outcome carries the trained weights");
    }

    #[test]
    fn segment_outcome_reports_miou() {
        let cfg = tiny_cfg(3);
        let out = train_outcome(&cfg, Task::Segment).unwrap();
        assert!((0.0..=1.0).contains(&out.overall), "mIoU in [0,1], got {}", out.overall);
    }

    #[test]
    fn unpadded_net_rejects_too_small_canvases() {
        let mut cfg = tiny_cfg(3);
        cfg.model.padding = padlab_core::border::PadKind::None;
        cfg.data.patch = 4;
        let err = train_outcome(&cfg, Task::Classify).unwrap_err();
        assert!(err.to_string().contains("block"), "{err}");
    }
}
