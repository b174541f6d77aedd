//! Training and inference engine for small convolutional networks in pure
//! f64, with pluggable image-border handling and the analysis tools built
//! on top of it: synthetic datasets, evaluation metrics, per-location
//! aggregation, and latent dimensionality estimation.

pub mod border;
pub mod checkpoint;
pub mod dimest;
pub mod error;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod pgm;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;

pub use border::{PadKind, PaddingMode};
pub use error::{Error, Result};
pub use ops::{BilinearAlign, PixelLabels};
pub use optim::{sgd_step, Param, SgdConfig};
pub use rng::{derive_seed, rng_from, Rng};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
