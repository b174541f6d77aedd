//! Image-border handling: the padding modes, their gradient transposes, the
//! rescale mask used by partial convolution, and a diagnostic that maps how
//! far border-injected signal can travel through a conv stack.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadKind {
    Zero,
    Reflect,
    Replicate,
    Circular,
    Partial,
    None,
}

impl PadKind {
    pub const ALL: [PadKind; 6] = [
        PadKind::Zero,
        PadKind::Reflect,
        PadKind::Replicate,
        PadKind::Circular,
        PadKind::Partial,
        PadKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PadKind::Zero => "zero",
            PadKind::Reflect => "reflect",
            PadKind::Replicate => "replicate",
            PadKind::Circular => "circular",
            PadKind::Partial => "partial",
            PadKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PadKind::Zero),
            "reflect" => Ok(PadKind::Reflect),
            "replicate" => Ok(PadKind::Replicate),
            "circular" => Ok(PadKind::Circular),
            "partial" => Ok(PadKind::Partial),
            "none" => Ok(PadKind::None),
            other => Err(Error::parse(format!(
                "unknown padding kind {other:?}; expected zero|reflect|replicate|circular|partial|none"
            ))),
        }
    }
}

/// A padding policy: what fills the border and how many rings of it.
/// `None` always behaves as amount 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PaddingMode {
    pub kind: PadKind,
    pub amount: usize,
}

impl PaddingMode {
    pub fn new(kind: PadKind, amount: usize) -> Self {
        PaddingMode { kind, amount }
    }
    pub fn zero(amount: usize) -> Self {
        PaddingMode { kind: PadKind::Zero, amount }
    }
    pub fn none() -> Self {
        PaddingMode { kind: PadKind::None, amount: 0 }
    }
    /// Effective ring count: `None` never pads.
    pub fn rings(&self) -> usize {
        if self.kind == PadKind::None {
            0
        } else {
            self.amount
        }
    }
}

impl std::fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.rings())
    }
}

/// Map a (possibly out-of-range) coordinate on one axis back to a source
/// index, or `None` when the position is filled rather than copied.
#[inline]
fn src_index(i: isize, extent: usize, kind: PadKind) -> Option<usize> {
    let e = extent as isize;
    if i >= 0 && i < e {
        return Some(i as usize);
    }
    match kind {
        PadKind::Zero | PadKind::Partial | PadKind::None => None,
        PadKind::Reflect => {
            // Mirror about the edge pixel without repeating it: -1 -> 1.
            let j = if i < 0 { -i } else { 2 * e - 2 - i };
            Some(j as usize)
        }
        PadKind::Replicate => Some(i.clamp(0, e - 1) as usize),
        PadKind::Circular => Some(i.rem_euclid(e) as usize),
    }
}

fn check_pad_args(h: usize, w: usize, mode: PaddingMode) -> Result<()> {
    if mode.kind == PadKind::Reflect && mode.amount >= h.min(w) && mode.amount > 0 {
        return Err(Error::argument(format!(
            "reflect padding amount {} needs inputs larger than {}x{}",
            mode.amount, h, w
        )));
    }
    Ok(())
}

/// Grow every (h, w) plane by `mode.rings()` on each side.
pub fn pad(x: &Tensor, mode: PaddingMode) -> Result<Tensor> {
    let (n, c, h, w) = x.shape();
    check_pad_args(h, w, mode)?;
    let a = mode.rings();
    if a == 0 {
        return Ok(x.clone());
    }
    let (hp, wp) = (h + 2 * a, w + 2 * a);
    let mut out = Tensor::zeros(n, c, hp, wp);
    // Resolve each axis once; planes reuse the maps.
    let ymap: Vec<Option<usize>> =
        (0..hp).map(|oy| src_index(oy as isize - a as isize, h, mode.kind)).collect();
    let xmap: Vec<Option<usize>> =
        (0..wp).map(|ox| src_index(ox as isize - a as isize, w, mode.kind)).collect();
    for bn in 0..n {
        for ch in 0..c {
            let src = x.plane(bn, ch);
            let dst = out.plane_mut(bn, ch);
            for (oy, my) in ymap.iter().enumerate() {
                let Some(iy) = my else { continue };
                let drow = &mut dst[oy * wp..(oy + 1) * wp];
                let srow = &src[iy * w..(iy + 1) * w];
                for (ox, mx) in xmap.iter().enumerate() {
                    if let Some(ix) = mx {
                        drow[ox] = srow[*ix];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient transpose of [`pad`]: fold a padded-shape gradient back onto the
/// original extent, adding the contribution of every copied border cell to
/// its source pixel.
pub fn pad_backward(grad_padded: &Tensor, mode: PaddingMode, h: usize, w: usize) -> Result<Tensor> {
    let (n, c, hp, wp) = grad_padded.shape();
    let a = mode.rings();
    if hp != h + 2 * a || wp != w + 2 * a {
        return Err(Error::dimension(format!(
            "padded gradient is {hp}x{wp}, expected {}x{}",
            h + 2 * a,
            w + 2 * a
        )));
    }
    if a == 0 {
        return Ok(grad_padded.clone());
    }
    let ymap: Vec<Option<usize>> =
        (0..hp).map(|oy| src_index(oy as isize - a as isize, h, mode.kind)).collect();
    let xmap: Vec<Option<usize>> =
        (0..wp).map(|ox| src_index(ox as isize - a as isize, w, mode.kind)).collect();
    let mut out = Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            let src = grad_padded.plane(bn, ch);
            let dst = out.plane_mut(bn, ch);
            for (oy, my) in ymap.iter().enumerate() {
                let Some(iy) = my else { continue };
                let srow = &src[oy * wp..(oy + 1) * wp];
                for (ox, mx) in xmap.iter().enumerate() {
                    if let Some(ix) = mx {
                        dst[iy * w + ix] += srow[ox];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-output-position rescale factors for partial convolution:
/// kernel_area / (taps that land on real pixels). Shape (1, 1, ho, wo).
pub fn partial_scale_mask(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    amount: usize,
    stride: usize,
) -> Result<Tensor> {
    let (ho, wo) = conv_out_size(h, w, kh, kw, amount, stride)?;
    let area = (kh * kw) as f64;
    let a = amount as isize;
    let mut m = Tensor::zeros(1, 1, ho, wo);
    for oy in 0..ho {
        for ox in 0..wo {
            let mut valid = 0usize;
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - a;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - a;
                    if ix >= 0 && ix < w as isize {
                        valid += 1;
                    }
                }
            }
            if valid == 0 {
                return Err(Error::geometry(format!(
                    "partial conv window at ({oy},{ox}) covers no real pixels"
                )));
            }
            *m.at_mut(0, 0, oy, ox) = area / valid as f64;
        }
    }
    Ok(m)
}

/// floor((extent + 2*pad - kernel) / stride) + 1, rejected when empty.
pub fn conv_out_size(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    stride: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::argument("stride must be at least 1".to_string()));
    }
    if kh == 0 || kw == 0 {
        return Err(Error::argument("kernel extent must be at least 1".to_string()));
    }
    let hin = h + 2 * pad;
    let win = w + 2 * pad;
    if hin < kh || win < kw {
        return Err(Error::geometry(format!(
            "kernel {kh}x{kw} does not fit {h}x{w} input with pad {pad}"
        )));
    }
    Ok(((hin - kh) / stride + 1, (win - kw) / stride + 1))
}

/// One spatial layer of a conv stack, as seen by the reach diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct ReachLayer {
    pub kernel: usize,
    pub stride: usize,
    pub amount: usize,
}

/// For every input pixel, count final-layer units that are reachable from it
/// *and* carry border-pad signal. A unit carries pad signal when any window
/// on the path from input to that unit read a padded position.
///
/// Zero layers leave nothing to count: the map is all zero.
pub fn positional_reach(layers: &[ReachLayer], h: usize, w: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(1, 1, h, w);
    if layers.is_empty() {
        return Ok(out);
    }
    // Pad-touch is input-independent: compute it once.
    let pad_touch = propagate_pad(layers, h, w)?;
    for py in 0..h {
        for px in 0..w {
            let reach = propagate_reach(layers, h, w, py, px)?;
            let count = reach
                .iter()
                .zip(pad_touch.iter())
                .filter(|(r, p)| **r && **p)
                .count();
            *out.at_mut(0, 0, py, px) = count as f64;
        }
    }
    Ok(out)
}

fn layer_out(h: usize, w: usize, l: ReachLayer) -> Result<(usize, usize)> {
    conv_out_size(h, w, l.kernel, l.kernel, l.amount, l.stride)
}

fn propagate_pad(layers: &[ReachLayer], mut h: usize, mut w: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; h * w];
    for l in layers {
        let (ho, wo) = layer_out(h, w, *l)?;
        let a = l.amount as isize;
        let mut next = vec![false; ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut hit = false;
                'win: for ky in 0..l.kernel {
                    let iy = (oy * l.stride + ky) as isize - a;
                    for kx in 0..l.kernel {
                        let ix = (ox * l.stride + kx) as isize - a;
                        if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                            hit = true; // the window reads a pad cell here
                            break 'win;
                        }
                        if mask[iy as usize * w + ix as usize] {
                            hit = true;
                            break 'win;
                        }
                    }
                }
                next[oy * wo + ox] = hit;
            }
        }
        mask = next;
        h = ho;
        w = wo;
    }
    Ok(mask)
}

fn propagate_reach(
    layers: &[ReachLayer],
    mut h: usize,
    mut w: usize,
    py: usize,
    px: usize,
) -> Result<Vec<bool>> {
    let mut mask = vec![false; h * w];
    mask[py * w + px] = true;
    for l in layers {
        let (ho, wo) = layer_out(h, w, *l)?;
        let a = l.amount as isize;
        let mut next = vec![false; ho * wo];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut hit = false;
                'win: for ky in 0..l.kernel {
                    let iy = (oy * l.stride + ky) as isize - a;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..l.kernel {
                        let ix = (ox * l.stride + kx) as isize - a;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        if mask[iy as usize * w + ix as usize] {
                            hit = true;
                            break 'win;
                        }
                    }
                }
                next[oy * wo + ox] = hit;
            }
        }
        mask = next;
        h = ho;
        w = wo;
    }
    Ok(mask)
}
