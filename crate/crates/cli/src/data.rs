//! Dataset assembly: synthetic patch generation or CIFAR-10 binary files,
//! grid composition, probe image batches, and batch stacking.

use std::path::PathBuf;

use padlab_core::ops::{bilinear_forward, BilinearAlign};
use padlab_core::synth::{
    gen_synthetic_patchset, load_cifar10, synthetic_probe_images, compose_grid_sample,
    GridSample, GridSpec, Normalize, CIFAR_CLASSES,
};
use padlab_core::{derive_seed, rng_from, Error, Result, Tensor};
use rand::Rng as _;

use crate::config::{DataCfg, DataSource, ProbeCfg};

/// Environment variable naming the directory that holds CIFAR-10 batches.
pub const DATA_ENV: &str = "PADLAB_DATA";

const CIFAR_TRAIN: &str = "data_batch_1.bin";
const CIFAR_VAL: &str = "test_batch.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Raw-valued labeled images at the given side, in [0,1].
pub fn load_images(
    cfg: &DataCfg,
    side: usize,
    split: Split,
    seed: u64,
) -> Result<Vec<(Tensor, usize)>> {
    let n = match split {
        Split::Train => cfg.train_n,
        Split::Val => cfg.val_n,
    };
    match cfg.source {
        DataSource::Synthetic => {
            gen_synthetic_patchset(n, cfg.classes, side, derive_seed(seed, split.tag()))
        }
        DataSource::Cifar10 => {
            if cfg.classes != CIFAR_CLASSES {
                return Err(Error::argument(format!(
                    "cifar10 has {CIFAR_CLASSES} classes, config says {}",
                    cfg.classes
                )));
            }
            let root = std::env::var_os(DATA_ENV).map(PathBuf::from).ok_or_else(|| {
                Error::argument(format!(
                    "{DATA_ENV} is unset; point it at the CIFAR-10 binary directory \
                     or set source = synthetic in [data]"
                ))
            })?;
            let file = match split {
                Split::Train => CIFAR_TRAIN,
                Split::Val => CIFAR_VAL,
            };
            let path = root.join(file);
            if !path.is_file() {
                return Err(Error::argument(format!(
                    "dataset file {} is missing; fetch the CIFAR-10 binary batches \
                     or set source = synthetic in [data]",
                    path.display()
                )));
            }
            let mut samples = load_cifar10(&path)?;
            samples.truncate(n);
            if samples.len() < n {
                return Err(Error::argument(format!(
                    "{} holds {} records, config wants {n}",
                    path.display(),
                    samples.len()
                )));
            }
            if side == samples[0].0.h() {
                return Ok(samples);
            }
            samples
                .into_iter()
                .map(|(t, label)| Ok((bilinear_forward(&t, side, side, BilinearAlign::Center)?, label)))
                .collect()
        }
    }
}

/// Random cell and random patch per sample.
pub fn grid_train_set(
    patches: &[(Tensor, usize)],
    spec: &GridSpec,
    norm: &Normalize,
    n: usize,
    seed: u64,
) -> Result<Vec<GridSample>> {
    let mut rng = rng_from(seed);
    let cells = spec.cells();
    (0..n)
        .map(|_| {
            let (patch, label) = &patches[rng.gen_range(0..patches.len())];
            let location = rng.gen_range(1..=cells);
            compose_grid_sample(patch, *label, location, spec, norm)
        })
        .collect()
}

/// Cells round-robin so every location is evaluated, patches drawn randomly.
pub fn grid_val_set(
    patches: &[(Tensor, usize)],
    spec: &GridSpec,
    norm: &Normalize,
    n: usize,
    seed: u64,
) -> Result<Vec<GridSample>> {
    let mut rng = rng_from(seed);
    let cells = spec.cells();
    (0..n)
        .map(|i| {
            let (patch, label) = &patches[rng.gen_range(0..patches.len())];
            compose_grid_sample(patch, *label, i % cells + 1, spec, norm)
        })
        .collect()
}

/// Normalized probe inputs, one (1,3,side,side) tensor per image.
pub fn probe_inputs(
    probe: &ProbeCfg,
    n: usize,
    side: usize,
    norm: &Normalize,
    seed: u64,
) -> Result<Vec<Tensor>> {
    let raw = synthetic_probe_images(probe.images, n, side, side, seed);
    (0..n)
        .map(|i| {
            let img = Tensor::from_fn(1, 3, side, side, |_, c, y, x| raw.at(i, c, y, x));
            norm.apply(&img)
        })
        .collect()
}

/// Stack (1,c,h,w) tensors into one (B,c,h,w) batch.
pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::argument("cannot stack an empty batch".to_string()))?;
    let (_, c, h, w) = first.shape();
    let mut data = Vec::with_capacity(items.len() * c * h * w);
    for t in items {
        let (n, tc, th, tw) = t.shape();
        if (n, tc, th, tw) != (1, c, h, w) {
            return Err(Error::dimension(format!(
                "stack wants (1,{c},{h},{w}) items, got ({n},{tc},{th},{tw})"
            )));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(items.len(), c, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, RunConfig};
    use padlab_core::synth::CanvasColor;

    fn small_data() -> DataCfg {
        let mut d = RunConfig::default_for(Experiment::GridClassify).data;
        d.train_n = 8;
        d.val_n = 6;
        d
    }

    #[test]
    fn synthetic_images_are_deterministic_and_sized() {
        let cfg = small_data();
        let a = load_images(&cfg, 12, Split::Train, 7).unwrap();
        let b = load_images(&cfg, 12, Split::Train, 7).unwrap();
        assert_eq!(a.len(), 8, "train_n rules the sample count");
        assert_eq!(a[0].0.shape(), (1, 3, 12, 12));
        assert_eq!(a, b, "same seed must give the same patchset");
        let v = load_images(&cfg, 12, Split::Val, 7).unwrap();
        assert_ne!(a[0].0, v[0].0, "train and val draw from different streams");
    }

    #[test]
    fn cifar_source_demands_the_env_and_ten_classes() {
        let mut cfg = small_data();
        cfg.source = DataSource::Cifar10;
        let err = load_images(&cfg, 32, Split::Train, 0).unwrap_err();
        assert!(err.to_string().contains("10 classes"), "{err}");
        cfg.classes = 10;
        std::env::remove_var(DATA_ENV);
        let err = load_images(&cfg, 32, Split::Train, 0).unwrap_err();
        assert!(err.to_string().contains("synthetic"), "{err}");
        assert!(err.to_string().contains(DATA_ENV), "{err}");
    }

    #[test]
    fn val_grid_covers_every_cell() {
        let cfg = small_data();
        let patches = load_images(&cfg, cfg.patch, Split::Val, 3).unwrap();
        let spec = GridSpec::new(3, cfg.patch, CanvasColor::Black).unwrap();
        let norm = Normalize::dataset();
        let set = grid_val_set(&patches, &spec, &norm, 18, 3).unwrap();
        let mut seen = vec![0usize; spec.cells()];
        for s in &set {
            seen[s.location - 1] += 1;
        }
        assert!(seen.iter().all(|&c| c == 2), "18 samples over 9 cells, twice each");
    }

    #[test]
    fn stack_concatenates_and_rejects_mismatches() {
        let a = Tensor::full(1, 2, 3, 3, 1.0);
        let b = Tensor::full(1, 2, 3, 3, 2.0);
        let s = stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), (2, 2, 3, 3));
        assert_eq!(s.at(1, 0, 0, 0), 2.0);
        let c = Tensor::full(1, 2, 4, 3, 0.0);
        assert!(stack(&[&a, &c]).is_err(), "ragged shapes must be rejected");
    }

    #[test]
    fn probe_inputs_are_normalized() {
        let probe = RunConfig::default_for(Experiment::Probe).probe;
        let imgs = probe_inputs(&probe, 2, 10, &Normalize::dataset(), 5).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].shape(), (1, 3, 10, 10));
        let mean: f64 =
            imgs[0].data().iter().sum::<f64>() / imgs[0].data().len() as f64;
        assert!(mean.abs() < 1.0, "normalized noise sits near zero, got {mean}");
    }
}
