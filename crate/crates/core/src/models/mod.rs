//! Layer wrappers and the two model families used by the experiments.

pub mod grid;
pub mod layers;
pub mod vgg;

pub use grid::{build_gridnet, GridNet, GridNetSpec, Task, GRIDNET_STRIDES, GRIDNET_WIDTHS};
pub use layers::{theoretical_rf, BatchNorm2d, Conv2d, Linear};
pub use vgg::{build_probe, build_vgg5, PosProbe, Vgg5, PROBE_ALIGN_DEFAULT, VGG5_WIDTHS};
