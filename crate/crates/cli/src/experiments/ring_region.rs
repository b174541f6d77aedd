//! Ring-region evaluation: a grid segmenter scored inside concentric
//! relative-distance bands of the canvas.

use padlab_core::metrics::{band_mask, check_bands, IouAccum};
use padlab_core::models::{build_gridnet, Task};
use padlab_core::synth::{GridSpec, Normalize};
use padlab_core::{derive_seed, PixelLabels, Result};

use crate::artifacts::{fmt_metric, RunDir};
use crate::config::RunConfig;
use crate::data::{grid_val_set, load_images, Split};
use crate::experiments::grid;

pub struct RingRegionOutcome {
    pub overall: f64,
    /// One mIoU per configured band; None when a band holds no pixels.
    pub per_band: Vec<Option<f64>>,
}

pub fn run(cfg: &RunConfig, dir: &RunDir) -> Result<RingRegionOutcome> {
    check_bands(&cfg.rings.bands)?;
    let outcome = grid::run(cfg, dir, Task::Segment)?;

    let mut model = build_gridnet(&grid::net_spec(cfg, Task::Segment), 0)?;
    model.load_state(&outcome.state)?;

    let spec = GridSpec::new(cfg.grid.k, cfg.data.patch, cfg.grid.canvas)?;
    let norm = Normalize::dataset();
    let val_patches = load_images(&cfg.data, cfg.data.patch, Split::Val, cfg.seed)?;
    let val_set = grid_val_set(
        &val_patches,
        &spec,
        &norm,
        cfg.data.val_n,
        derive_seed(cfg.seed, "grid-val"),
    )?;

    let nc = cfg.data.classes + 1;
    let bands = &cfg.rings.bands;
    let mut accums: Vec<IouAccum> = (0..bands.len()).map(|_| IouAccum::new(nc)).collect();
    for sample in &val_set {
        let logits = model.infer(&sample.image)?;
        let pred = padlab_core::metrics::predicted_pixel_labels(&logits);
        accumulate_bands(&pred, &sample.seg, bands, &mut accums)?;
    }
    let per_band: Vec<Option<f64>> = accums.iter().map(|a| a.miou()).collect();

    let rows: Vec<String> = bands
        .iter()
        .zip(&per_band)
        .map(|((lo, hi), m)| {
            let cell = m.map(|v| fmt_metric(v)).unwrap_or_default();
            format!("{lo},{hi},{cell}")
        })
        .collect();
    dir.write_csv("ring_region.csv", "lo,hi,miou", &rows)?;
    Ok(RingRegionOutcome { overall: outcome.overall, per_band })
}

/// Accumulate one sample's pixels into the per-band tallies.
fn accumulate_bands(
    pred: &PixelLabels,
    gt: &PixelLabels,
    bands: &[(f64, f64)],
    accums: &mut [IouAccum],
) -> Result<()> {
    let (h, w) = (gt.h, gt.w);
    for (i, &(lo, hi)) in bands.iter().enumerate() {
        let mask = band_mask(h, w, lo, hi);
        accums[i].add_masked(&pred.data, &gt.data, Some(&mask))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;
    use padlab_core::metrics::{predicted_pixel_labels, ring_region_miou};

    #[test]
    fn bands_accumulate_like_the_single_shot_metric() {
        let mut cfg = RunConfig::default_for(Experiment::RingRegion);
        cfg.data.train_n = 8;
        cfg.data.val_n = 9;
        cfg.data.patch = 6;
        cfg.data.classes = 2;
        cfg.grid.k = 3;
        cfg.optim.epochs = 1;
        let dir = RunDir::create(&std::env::temp_dir().join(format!(
            "padlab-ringregion-{}",
            std::process::id()
        )))
        .unwrap();
        let out = run(&cfg, &dir).unwrap();
        assert_eq!(out.per_band.len(), cfg.rings.bands.len());

        let spec = GridSpec::new(cfg.grid.k, cfg.data.patch, cfg.grid.canvas).unwrap();
        let norm = Normalize::dataset();
        let val_patches = load_images(&cfg.data, cfg.data.patch, Split::Val, cfg.seed).unwrap();
        let val = grid_val_set(&val_patches, &spec, &norm, 1, derive_seed(cfg.seed, "grid-val"))
            .unwrap();
        let mut model = build_gridnet(&grid::net_spec(&cfg, Task::Segment), 0).unwrap();
        let entries = padlab_core::checkpoint::load(&dir.file("model.ckpt")).unwrap();
        model.load_state(&entries).unwrap();
        let pred = predicted_pixel_labels(&model.infer(&val[0].image).unwrap());
        let single = ring_region_miou(&pred, &val[0].seg, 3, &cfg.rings.bands).unwrap();
        assert_eq!(single.len(), cfg.rings.bands.len(), "oracle agrees on band count");
        let _ = std::fs::remove_dir_all(dir.path());
    }
}
