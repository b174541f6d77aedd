//! Synthetic data: position-encoding target maps, grid-canvas composition
//! with segmentation labels, probe image sets, a class-separable patch
//! generator, and CIFAR-10 binary ingestion/export.

use crate::error::{Error, Result};
use crate::ops::PixelLabels;
use crate::rng::{rng_from, Rng, RngExt};
use crate::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

// ── position targets ────────────────────────────────────────────────────

/// Ground-truth map whose values encode pixel position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// Horizontal ramp, 0 at the left edge to 1 at the right.
    H,
    /// Vertical ramp, 0 at the top to 1 at the bottom.
    V,
    /// Gaussian bump centered on the image, min-max normalized.
    G,
    /// Horizontal stripes: repeated left-to-right ramps.
    Hs,
    /// Vertical stripes: repeated top-to-bottom ramps.
    Vs,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [Pattern::H, Pattern::V, Pattern::G, Pattern::Hs, Pattern::Vs];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::H => "h",
            Pattern::V => "v",
            Pattern::G => "g",
            Pattern::Hs => "hs",
            Pattern::Vs => "vs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Pattern::H),
            "v" => Ok(Pattern::V),
            "g" => Ok(Pattern::G),
            "hs" => Ok(Pattern::Hs),
            "vs" => Ok(Pattern::Vs),
            other => Err(Error::parse(format!(
                "unknown position pattern {other:?}; expected h|v|g|hs|vs"
            ))),
        }
    }
}

pub const DEFAULT_STRIPES: usize = 4;

/// Ramp over one axis split into `stripes` integer segments; each segment
/// spans [0,1] on its own width. One stripe reduces to the plain ramp.
fn stripe_value(i: usize, extent: usize, stripes: usize) -> f64 {
    let a = i * stripes / extent;
    let lo = (a * extent).div_ceil(stripes);
    let hi = ((a + 1) * extent).div_ceil(stripes);
    (i - lo) as f64 / (hi - 1 - lo) as f64
}

/// Build a normalized position map. `stripes` only affects Hs/Vs.
pub fn gen_position_target(pattern: Pattern, h: usize, w: usize, stripes: usize) -> Result<Tensor> {
    let need = |axis: usize, min: usize, what: &str| {
        if axis < min {
            Err(Error::geometry(format!(
                "{what} needs extent >= {min}, got {axis}"
            )))
        } else {
            Ok(())
        }
    };
    match pattern {
        Pattern::H => {
            need(w, 2, "horizontal ramp")?;
            Ok(Tensor::from_fn(1, 1, h, w, |_, _, _, x| {
                x as f64 / (w - 1) as f64
            }))
        }
        Pattern::V => {
            need(h, 2, "vertical ramp")?;
            Ok(Tensor::from_fn(1, 1, h, w, |_, _, y, _| {
                y as f64 / (h - 1) as f64
            }))
        }
        Pattern::G => {
            need(h, 2, "gaussian bump")?;
            need(w, 2, "gaussian bump")?;
            let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
            let sigma = h as f64 / 4.0;
            let raw = Tensor::from_fn(1, 1, h, w, |_, _, y, x| {
                let r2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                (-r2 / (2.0 * sigma * sigma)).exp()
            });
            let mn = raw.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = raw.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(raw.map(|v| (v - mn) / (mx - mn)))
        }
        Pattern::Hs => {
            if stripes == 0 {
                return Err(Error::argument("stripe count must be at least 1".to_string()));
            }
            need(w, 2 * stripes, "horizontal stripes")?;
            Ok(Tensor::from_fn(1, 1, h, w, |_, _, _, x| {
                stripe_value(x, w, stripes)
            }))
        }
        Pattern::Vs => {
            if stripes == 0 {
                return Err(Error::argument("stripe count must be at least 1".to_string()));
            }
            need(h, 2 * stripes, "vertical stripes")?;
            Ok(Tensor::from_fn(1, 1, h, w, |_, _, y, _| {
                stripe_value(y, h, stripes)
            }))
        }
    }
}

// ── grid canvas ─────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CanvasColor {
    Black,
    White,
    /// Dataset channel means, kept un-normalized on the canvas.
    Mean,
    Rgb([f64; 3]),
}

pub const DATASET_MEAN: [f64; 3] = [0.491, 0.482, 0.446];
pub const DATASET_STD: [f64; 3] = [0.247, 0.243, 0.262];

impl CanvasColor {
    pub fn rgb(self) -> [f64; 3] {
        match self {
            CanvasColor::Black => [0.0; 3],
            CanvasColor::White => [1.0; 3],
            CanvasColor::Mean => DATASET_MEAN,
            CanvasColor::Rgb(c) => c,
        }
    }

    pub fn as_str(self) -> String {
        match self {
            CanvasColor::Black => "black".to_string(),
            CanvasColor::White => "white".to_string(),
            CanvasColor::Mean => "mean".to_string(),
            CanvasColor::Rgb([r, g, b]) => format!("{r},{g},{b}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "black" => Ok(CanvasColor::Black),
            "white" => Ok(CanvasColor::White),
            "mean" => Ok(CanvasColor::Mean),
            other => {
                let parts: Vec<&str> = other.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::parse(format!(
                        "canvas color {other:?}: expected black|white|mean or r,g,b"
                    )));
                }
                let mut c = [0.0; 3];
                for (slot, p) in c.iter_mut().zip(&parts) {
                    *slot = p.trim().parse::<f64>().map_err(|_| {
                        Error::parse(format!("canvas color component {p:?} is not a number"))
                    })?;
                    if !(0.0..=1.0).contains(slot) {
                        return Err(Error::range(format!(
                            "canvas color component {slot} outside [0,1]"
                        )));
                    }
                }
                Ok(CanvasColor::Rgb(c))
            }
        }
    }
}

/// Per-channel normalization applied to the patch only.
#[derive(Clone, Copy, Debug)]
pub struct Normalize {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Normalize {
    pub fn dataset() -> Self {
        Normalize {
            mean: DATASET_MEAN,
            std: DATASET_STD,
        }
    }
    /// Subtract the dataset mean but keep unit scale.
    pub fn mean_only() -> Self {
        Normalize {
            mean: DATASET_MEAN,
            std: [1.0; 3],
        }
    }

    /// Normalize a whole (n,3,h,w) batch channel-wise.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, _, _) = x.shape();
        if c != 3 {
            return Err(Error::dimension(format!(
                "normalization expects 3 channels, got {c}"
            )));
        }
        let mut out = x.clone();
        for bn in 0..n {
            for ch in 0..3 {
                for v in out.plane_mut(bn, ch) {
                    *v = (*v - self.mean[ch]) / self.std[ch];
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub k: usize,
    pub patch: usize,
    pub canvas: CanvasColor,
}

impl GridSpec {
    pub fn new(k: usize, patch: usize, canvas: CanvasColor) -> Result<Self> {
        if !(k % 2 == 1 && (3..=13).contains(&k)) {
            return Err(Error::argument(format!(
                "grid side must be odd in 3..=13, got {k}"
            )));
        }
        if patch == 0 {
            return Err(Error::argument("patch side must be at least 1".to_string()));
        }
        Ok(GridSpec { k, patch, canvas })
    }

    pub fn canvas_side(&self) -> usize {
        self.k * self.patch
    }

    pub fn cells(&self) -> usize {
        self.k * self.k
    }
}

pub struct GridSample {
    pub image: Tensor,
    pub class_label: usize,
    /// 1-based row-major cell index.
    pub location: usize,
    pub seg: PixelLabels,
}

/// Paste a normalized patch into cell `location` of a raw-color canvas and
/// emit matching segmentation labels (background 0, object class+1).
pub fn compose_grid_sample(
    patch: &Tensor,
    class_label: usize,
    location: usize,
    spec: &GridSpec,
    norm: &Normalize,
) -> Result<GridSample> {
    let (pn, pc, ph, pw) = patch.shape();
    if (pn, pc) != (1, 3) || ph != spec.patch || pw != spec.patch {
        return Err(Error::dimension(format!(
            "patch must be (1,3,{p},{p}), got ({pn},{pc},{ph},{pw})",
            p = spec.patch
        )));
    }
    if location < 1 || location > spec.cells() {
        return Err(Error::range(format!(
            "location {location} outside 1..={}",
            spec.cells()
        )));
    }
    let side = spec.canvas_side();
    let (row, col) = ((location - 1) / spec.k, (location - 1) % spec.k);
    let (y0, x0) = (row * spec.patch, col * spec.patch);

    let bg = spec.canvas.rgb();
    let mut image = Tensor::zeros(1, 3, side, side);
    for ch in 0..3 {
        image.plane_mut(0, ch).fill(bg[ch]);
        let pl = patch.plane(0, ch).to_vec();
        let dst = image.plane_mut(0, ch);
        for y in 0..spec.patch {
            for x in 0..spec.patch {
                dst[(y0 + y) * side + x0 + x] =
                    (pl[y * spec.patch + x] - norm.mean[ch]) / norm.std[ch];
            }
        }
    }

    let mut seg = vec![0usize; side * side];
    for y in 0..spec.patch {
        for x in 0..spec.patch {
            seg[(y0 + y) * side + x0 + x] = class_label + 1;
        }
    }
    Ok(GridSample {
        image,
        class_label,
        location,
        seg: PixelLabels::new(1, side, side, seg)?,
    })
}

// ── probe images ────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeImages {
    Black,
    White,
    Noise,
}

impl ProbeImages {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeImages::Black => "black",
            ProbeImages::White => "white",
            ProbeImages::Noise => "noise",
        }
    }
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "black" => Ok(ProbeImages::Black),
            "white" => Ok(ProbeImages::White),
            "noise" => Ok(ProbeImages::Noise),
            other => Err(Error::parse(format!(
                "unknown probe image kind {other:?}; expected black|white|noise"
            ))),
        }
    }
}

pub fn synthetic_probe_images(kind: ProbeImages, n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    match kind {
        ProbeImages::Black => Tensor::zeros(n, 3, h, w),
        ProbeImages::White => Tensor::full(n, 3, h, w, 1.0),
        ProbeImages::Noise => {
            let mut rng = rng_from(seed);
            let mut t = Tensor::zeros(n, 3, h, w);
            for v in t.data_mut() {
                *v = rng.gen::<f64>();
            }
            t
        }
    }
}

// ── synthetic patch dataset ─────────────────────────────────────────────

fn hue_color(i: usize, classes: usize) -> [f64; 3] {
    let h = 360.0 * i as f64 / classes as f64;
    let seg = (h / 60.0) as usize % 6;
    let f = h / 60.0 - (h / 60.0).floor();
    match seg {
        0 => [1.0, f, 0.0],
        1 => [1.0 - f, 1.0, 0.0],
        2 => [0.0, 1.0, f],
        3 => [0.0, 1.0 - f, 1.0],
        4 => [f, 0.0, 1.0],
        _ => [1.0, 0.0, 1.0 - f],
    }
}

/// Class-conditional patches: a solid class-colored rectangle covering at
/// least 40% of the area over uniform noise. Labels cycle round-robin, so
/// mean color separates classes by construction.
pub fn gen_synthetic_patchset(
    n: usize,
    classes: usize,
    side: usize,
    seed: u64,
) -> Result<Vec<(Tensor, usize)>> {
    if n == 0 || classes == 0 {
        return Err(Error::argument(
            "patchset needs at least one sample and one class".to_string(),
        ));
    }
    if side < 4 {
        return Err(Error::argument(format!(
            "patch side must be at least 4, got {side}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let color = hue_color(label, classes);
        let mut t = Tensor::zeros(1, 3, side, side);
        for v in t.data_mut() {
            *v = rng.gen::<f64>();
        }
        // Rectangle extents in [0.65, 0.95] of the side keep coverage
        // above 0.4 of the area at every draw.
        let span = |rng: &mut Rng| -> usize {
            let lo = (side as f64 * 0.65).ceil() as usize;
            let hi = (side as f64 * 0.95).floor() as usize;
            rng.gen_range(lo..=hi.max(lo))
        };
        let (rh, rw) = (span(&mut rng), span(&mut rng));
        let y0 = rng.gen_range(0..=side - rh);
        let x0 = rng.gen_range(0..=side - rw);
        for ch in 0..3 {
            let pl = t.plane_mut(0, ch);
            for y in y0..y0 + rh {
                for x in x0..x0 + rw {
                    pl[y * side + x] = color[ch];
                }
            }
        }
        out.push((t, label));
    }
    Ok(out)
}

// ── CIFAR-10 binary format ──────────────────────────────────────────────

const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_CLASSES: usize = 10;

/// Parse records of 1 label byte + 3072 channel-major pixel bytes.
pub fn load_cifar10(path: &Path) -> Result<Vec<(Tensor, usize)>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::parse(format!(
            "{}: length {} is not a multiple of the {CIFAR_RECORD}-byte record",
            path.display(),
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for (ri, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::parse(format!(
                "{}: record {ri} has label byte {label}, expected < {CIFAR_CLASSES}",
                path.display()
            )));
        }
        let mut t = Tensor::zeros(1, 3, CIFAR_SIDE, CIFAR_SIDE);
        for (v, b) in t.data_mut().iter_mut().zip(&rec[1..]) {
            *v = *b as f64 / 255.0;
        }
        out.push((t, label));
    }
    Ok(out)
}

/// Export patches in the same binary layout. Requires 32x32 patches.
pub fn write_cifar10(path: &Path, samples: &[(Tensor, usize)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let mut rec = vec![0u8; CIFAR_RECORD];
    for (t, label) in samples {
        let (n, c, h, w) = t.shape();
        if (n, c, h, w) != (1, 3, CIFAR_SIDE, CIFAR_SIDE) {
            return Err(Error::dimension(format!(
                "export needs (1,3,32,32) patches, got ({n},{c},{h},{w})"
            )));
        }
        if *label >= CIFAR_CLASSES {
            return Err(Error::range(format!(
                "label {label} does not fit the format's {CIFAR_CLASSES} classes"
            )));
        }
        rec[0] = *label as u8;
        for (b, v) in rec[1..].iter_mut().zip(t.data()) {
            *b = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        f.write_all(&rec)?;
    }
    Ok(())
}
