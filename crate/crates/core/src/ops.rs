//! Forward/backward kernels on plain tensors. The autodiff tape calls these;
//! inference paths call them directly. Every reduction runs in a fixed order
//! so repeated runs produce identical bits.

use crate::border::{self, PadKind, PaddingMode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Integer class labels for one plane per batch entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelLabels {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<usize>,
}

impl PixelLabels {
    pub fn new(n: usize, h: usize, w: usize, data: Vec<usize>) -> Result<Self> {
        if data.len() != n * h * w {
            return Err(Error::dimension(format!(
                "label plane ({n},{h},{w}) needs {} values, got {}",
                n * h * w,
                data.len()
            )));
        }
        Ok(PixelLabels { n, h, w, data })
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize) -> usize {
        self.data[(n * self.h + y) * self.w + x]
    }
}

// ── conv2d ──────────────────────────────────────────────────────────────

fn conv_check(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<()> {
    let (_, ci, _, _) = x.shape();
    let (co, wci, _, _) = w.shape();
    if wci != ci {
        return Err(Error::dimension(format!(
            "conv weight expects {wci} input channels, input has {ci}"
        )));
    }
    let (bn, bc, bh, bw) = b.shape();
    if (bn, bh, bw) != (1, 1, 1) || bc != co {
        return Err(Error::dimension(format!(
            "conv bias must be (1,{co},1,1), got ({bn},{bc},{bh},{bw})"
        )));
    }
    if stride == 0 {
        return Err(Error::argument("stride must be at least 1".to_string()));
    }
    Ok(())
}

pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    mode: PaddingMode,
    stride: usize,
) -> Result<Tensor> {
    conv_check(x, w, b, stride)?;
    let (n, ci, h, wd) = x.shape();
    let (co, _, kh, kw) = w.shape();
    let a = mode.rings();
    let (ho, wo) = border::conv_out_size(h, wd, kh, kw, a, stride)?;
    let xp = border::pad(x, mode)?;
    let (_, _, _, wp) = xp.shape();

    let scale = if mode.kind == PadKind::Partial {
        Some(border::partial_scale_mask(h, wd, kh, kw, a, stride)?)
    } else {
        None
    };

    let mut y = Tensor::zeros(n, co, ho, wo);
    let mut acc = vec![0.0f64; ho * wo];
    for bn in 0..n {
        for oc in 0..co {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for ic in 0..ci {
                let xpl = xp.plane(bn, ic);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w.at(oc, ic, ky, kx);
                        for oy in 0..ho {
                            let base = (oy * stride + ky) * wp + kx;
                            let arow = &mut acc[oy * wo..(oy + 1) * wo];
                            if stride == 1 {
                                let xrow = &xpl[base..base + wo];
                                for (av, xv) in arow.iter_mut().zip(xrow) {
                                    *av += wv * *xv;
                                }
                            } else {
                                for (ox, av) in arow.iter_mut().enumerate() {
                                    *av += wv * xpl[base + ox * stride];
                                }
                            }
                        }
                    }
                }
            }
            let bias = b.at(0, oc, 0, 0);
            let ypl = y.plane_mut(bn, oc);
            match &scale {
                Some(m) => {
                    let mpl = m.plane(0, 0);
                    for i in 0..ho * wo {
                        ypl[i] = acc[i] * mpl[i] + bias;
                    }
                }
                None => {
                    for i in 0..ho * wo {
                        ypl[i] = acc[i] + bias;
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients of conv2d for input, weight, and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    mode: PaddingMode,
    stride: usize,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, ci, h, wd) = x.shape();
    let (co, _, kh, kw) = w.shape();
    let (dn, dc, ho, wo) = dy.shape();
    let a = mode.rings();
    let (eho, ewo) = border::conv_out_size(h, wd, kh, kw, a, stride)?;
    if (dn, dc, ho, wo) != (n, co, eho, ewo) {
        return Err(Error::dimension(format!(
            "conv gradient shape ({dn},{dc},{ho},{wo}) does not match output ({n},{co},{eho},{ewo})"
        )));
    }
    let xp = border::pad(x, mode)?;
    let (_, _, hp, wp) = xp.shape();

    // Bias gradient sees the raw upstream; the partial rescale applies only
    // to the convolution sum.
    let mut db = Tensor::zeros(1, co, 1, 1);
    for oc in 0..co {
        let mut s = 0.0;
        for bn in 0..n {
            s += dy.plane(bn, oc).iter().sum::<f64>();
        }
        *db.at_mut(0, oc, 0, 0) = s;
    }

    let dy_eff: Tensor = if mode.kind == PadKind::Partial {
        let m = border::partial_scale_mask(h, wd, kh, kw, a, stride)?;
        let mpl = m.plane(0, 0).to_vec();
        let mut t = dy.clone();
        for bn in 0..n {
            for oc in 0..co {
                let pl = t.plane_mut(bn, oc);
                for (v, s) in pl.iter_mut().zip(&mpl) {
                    *v *= *s;
                }
            }
        }
        t
    } else {
        dy.clone()
    };

    let mut dw = Tensor::zeros(co, ci, kh, kw);
    let mut dxp = Tensor::zeros(n, ci, hp, wp);
    for bn in 0..n {
        for oc in 0..co {
            let dpl = dy_eff.plane(bn, oc);
            for ic in 0..ci {
                let xpl = xp.plane(bn, ic);
                let dxpl = dxp.plane_mut(bn, ic);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut wsum = 0.0;
                        let wv = w.at(oc, ic, ky, kx);
                        for oy in 0..ho {
                            let base = (oy * stride + ky) * wp + kx;
                            let drow = &dpl[oy * wo..(oy + 1) * wo];
                            if stride == 1 {
                                let xrow = &xpl[base..base + wo];
                                let dxrow = &mut dxpl[base..base + wo];
                                let mut s = 0.0;
                                for i in 0..wo {
                                    s += drow[i] * xrow[i];
                                    dxrow[i] += wv * drow[i];
                                }
                                wsum += s;
                            } else {
                                let mut s = 0.0;
                                for (ox, dv) in drow.iter().enumerate() {
                                    let pi = base + ox * stride;
                                    s += dv * xpl[pi];
                                    dxpl[pi] += wv * dv;
                                }
                                wsum += s;
                            }
                        }
                        *dw.at_mut(oc, ic, ky, kx) += wsum;
                    }
                }
            }
        }
    }
    let dx = border::pad_backward(&dxp, mode, h, wd)?;
    Ok((dx, dw, db))
}

// ── relu ────────────────────────────────────────────────────────────────

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// The subgradient at exactly zero is taken as zero.
pub fn relu_backward(y: &Tensor, dy: &[f64]) -> Vec<f64> {
    y.data()
        .iter()
        .zip(dy)
        .map(|(yv, dv)| if *yv > 0.0 { *dv } else { 0.0 })
        .collect()
}

// ── maxpool 2x2 / stride 2 ──────────────────────────────────────────────

pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let (n, c, h, w) = x.shape();
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::geometry(format!(
            "maxpool window 2 needs even spatial extents, got {h}x{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(n, c, ho, wo);
    let mut arg = vec![0u32; n * c * ho * wo];
    let mut oi = 0usize;
    for bn in 0..n {
        for ch in 0..c {
            let xpl = x.plane(bn, ch);
            let ypl = y.plane_mut(bn, ch);
            for oy in 0..ho {
                for ox in 0..wo {
                    let i00 = (2 * oy) * w + 2 * ox;
                    // Ties keep the first index in scan order.
                    let cand = [i00, i00 + 1, i00 + w, i00 + w + 1];
                    let mut best = cand[0];
                    let mut bv = xpl[cand[0]];
                    for &i in &cand[1..] {
                        if xpl[i] > bv {
                            bv = xpl[i];
                            best = i;
                        }
                    }
                    ypl[oy * wo + ox] = bv;
                    arg[oi] = ((bn * c + ch) * h * w + best) as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2_backward(x_numel: usize, argmax: &[u32], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; x_numel];
    for (a, d) in argmax.iter().zip(dy) {
        dx[*a as usize] += *d;
    }
    dx
}

// ── batchnorm (per channel over n, h, w) ────────────────────────────────

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

fn bn_check(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let (_, c, _, _) = x.shape();
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        let (tn, tc, th, tw) = t.shape();
        if (tn, tc, th, tw) != (1, c, 1, 1) {
            return Err(Error::dimension(format!(
                "batchnorm {name} must be (1,{c},1,1), got ({tn},{tc},{th},{tw})"
            )));
        }
    }
    Ok(c)
}

/// Training mode: normalize by batch statistics. Returns (y, mean, inv_std);
/// the caller folds the per-channel stats into its running buffers.
pub fn bn_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let c = bn_check(x, gamma, beta)?;
    let (n, _, h, w) = x.shape();
    let m = (n * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut inv_std = vec![0.0; c];
    let mut y = Tensor::zeros(n, c, h, w);
    for ch in 0..c {
        let mut s = 0.0;
        for bn in 0..n {
            s += x.plane(bn, ch).iter().sum::<f64>();
        }
        let mu = s / m;
        let mut v = 0.0;
        for bn in 0..n {
            v += x
                .plane(bn, ch)
                .iter()
                .map(|xv| (xv - mu) * (xv - mu))
                .sum::<f64>();
        }
        let istd = 1.0 / (v / m + eps).sqrt();
        let (g, b) = (gamma.at(0, ch, 0, 0), beta.at(0, ch, 0, 0));
        for bn in 0..n {
            let xpl = x.plane(bn, ch).to_vec();
            let ypl = y.plane_mut(bn, ch);
            for (yv, xv) in ypl.iter_mut().zip(&xpl) {
                *yv = g * (xv - mu) * istd + b;
            }
        }
        mean[ch] = mu;
        inv_std[ch] = istd;
    }
    Ok((y, mean, inv_std))
}

/// Eval mode: a per-channel affine map using the provided running stats.
pub fn bn_forward_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    run_mean: &[f64],
    run_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let c = bn_check(x, gamma, beta)?;
    if run_mean.len() != c || run_var.len() != c {
        return Err(Error::dimension(format!(
            "running stats must have {c} channels, got {}/{}",
            run_mean.len(),
            run_var.len()
        )));
    }
    let (n, _, h, w) = x.shape();
    let mut y = Tensor::zeros(n, c, h, w);
    for ch in 0..c {
        let istd = 1.0 / (run_var[ch] + eps).sqrt();
        let scale = gamma.at(0, ch, 0, 0) * istd;
        let shift = beta.at(0, ch, 0, 0) - run_mean[ch] * scale;
        for bn in 0..n {
            let xpl = x.plane(bn, ch).to_vec();
            let ypl = y.plane_mut(bn, ch);
            for (yv, xv) in ypl.iter_mut().zip(&xpl) {
                *yv = scale * xv + shift;
            }
        }
    }
    Ok(y)
}

/// Training-mode gradient: flows through the batch mean and variance.
pub fn bn_backward_train(
    x: &Tensor,
    gamma: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = x.shape();
    let m = (n * h * w) as f64;
    let mut dx = Tensor::zeros(n, c, h, w);
    let mut dgamma = Tensor::zeros(1, c, 1, 1);
    let mut dbeta = Tensor::zeros(1, c, 1, 1);
    for ch in 0..c {
        let (mu, istd) = (mean[ch], inv_std[ch]);
        let mut s1 = 0.0; // sum dy
        let mut s2 = 0.0; // sum dy * xhat
        for bn in 0..n {
            let xpl = x.plane(bn, ch);
            let dpl = dy.plane(bn, ch);
            for (xv, dv) in xpl.iter().zip(dpl) {
                s1 += dv;
                s2 += dv * (xv - mu) * istd;
            }
        }
        let g = gamma.at(0, ch, 0, 0);
        for bn in 0..n {
            let xpl = x.plane(bn, ch).to_vec();
            let dpl = dy.plane(bn, ch).to_vec();
            let opl = dx.plane_mut(bn, ch);
            for i in 0..xpl.len() {
                let xhat = (xpl[i] - mu) * istd;
                opl[i] = g * istd * (dpl[i] - s1 / m - xhat * s2 / m);
            }
        }
        *dgamma.at_mut(0, ch, 0, 0) = s2;
        *dbeta.at_mut(0, ch, 0, 0) = s1;
    }
    (dx, dgamma, dbeta)
}

/// Eval-mode gradient: stats are constants.
pub fn bn_backward_eval(
    x: &Tensor,
    gamma: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = x.shape();
    let mut dx = Tensor::zeros(n, c, h, w);
    let mut dgamma = Tensor::zeros(1, c, 1, 1);
    let mut dbeta = Tensor::zeros(1, c, 1, 1);
    for ch in 0..c {
        let (mu, istd) = (mean[ch], inv_std[ch]);
        let g = gamma.at(0, ch, 0, 0);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for bn in 0..n {
            let xpl = x.plane(bn, ch).to_vec();
            let dpl = dy.plane(bn, ch).to_vec();
            let opl = dx.plane_mut(bn, ch);
            for i in 0..xpl.len() {
                s1 += dpl[i];
                s2 += dpl[i] * (xpl[i] - mu) * istd;
                opl[i] = dpl[i] * g * istd;
            }
        }
        *dgamma.at_mut(0, ch, 0, 0) = s2;
        *dbeta.at_mut(0, ch, 0, 0) = s1;
    }
    (dx, dgamma, dbeta)
}

/// Update running statistics in place: run = (1 - mom) * run + mom * new.
/// The variance fed in is the biased batch variance; the stored running
/// variance uses the unbiased estimate when more than one sample exists.
pub fn bn_update_running(
    run_mean: &mut [f64],
    run_var: &mut [f64],
    mean: &[f64],
    inv_std: &[f64],
    m: usize,
    eps: f64,
    momentum: f64,
) {
    let unbias = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 1.0 };
    for ch in 0..run_mean.len() {
        let var = 1.0 / (inv_std[ch] * inv_std[ch]) - eps;
        run_mean[ch] = (1.0 - momentum) * run_mean[ch] + momentum * mean[ch];
        run_var[ch] = (1.0 - momentum) * run_var[ch] + momentum * (var.max(0.0) * unbias);
    }
}

// ── linear ──────────────────────────────────────────────────────────────

fn linear_check(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, d, xh, xw) = x.shape();
    if (xh, xw) != (1, 1) {
        return Err(Error::dimension(format!(
            "linear input must be (n,d,1,1), got spatial {xh}x{xw}"
        )));
    }
    let (k, wd, wh, ww) = w.shape();
    if (wh, ww) != (1, 1) || wd != d {
        return Err(Error::dimension(format!(
            "linear weight must be (k,{d},1,1), got ({k},{wd},{wh},{ww})"
        )));
    }
    let (bn, bc, bh, bw) = b.shape();
    if (bn, bh, bw) != (1, 1, 1) || bc != k {
        return Err(Error::dimension(format!(
            "linear bias must be (1,{k},1,1), got ({bn},{bc},{bh},{bw})"
        )));
    }
    Ok((n, d, k))
}

pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, d, k) = linear_check(x, w, b)?;
    let mut y = Tensor::zeros(n, k, 1, 1);
    for bn in 0..n {
        let xr = x.row(bn);
        for kk in 0..k {
            let wr = &w.data()[kk * d..(kk + 1) * d];
            let mut s = b.at(0, kk, 0, 0);
            for i in 0..d {
                s += wr[i] * xr[i];
            }
            *y.at_mut(bn, kk, 0, 0) = s;
        }
    }
    Ok(y)
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d, _, _) = x.shape();
    let (k, _, _, _) = w.shape();
    let mut dx = Tensor::zeros(n, d, 1, 1);
    let mut dw = Tensor::zeros(k, d, 1, 1);
    let mut db = Tensor::zeros(1, k, 1, 1);
    for bn in 0..n {
        let xr = x.row(bn).to_vec();
        let dr = dy.row(bn).to_vec();
        for kk in 0..k {
            let g = dr[kk];
            *db.at_mut(0, kk, 0, 0) += g;
            let wr = &w.data()[kk * d..(kk + 1) * d];
            let dwr = &mut dw.data_mut()[kk * d..(kk + 1) * d];
            for i in 0..d {
                dwr[i] += g * xr[i];
            }
            let dxrow = &mut dx.data_mut()[bn * d..(bn + 1) * d];
            for i in 0..d {
                dxrow[i] += g * wr[i];
            }
        }
    }
    (dx, dw, db)
}

// ── global average pool ─────────────────────────────────────────────────

pub fn gap_forward(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.shape();
    let m = (h * w) as f64;
    let mut y = Tensor::zeros(n, c, 1, 1);
    for bn in 0..n {
        for ch in 0..c {
            *y.at_mut(bn, ch, 0, 0) = x.plane(bn, ch).iter().sum::<f64>() / m;
        }
    }
    y
}

pub fn gap_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let (n, c, h, w) = x.shape();
    let m = (h * w) as f64;
    let mut dx = Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            let g = dy.at(bn, ch, 0, 0) / m;
            dx.plane_mut(bn, ch).iter_mut().for_each(|v| *v = g);
        }
    }
    dx
}

// ── bilinear resize ─────────────────────────────────────────────────────

/// How output sample coordinates map back onto the input grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BilinearAlign {
    /// Pixel centers align: s = (t + 0.5) * in/out - 0.5, clamped at edges.
    Center,
    /// Corner pixels align: s = t * (in-1)/(out-1).
    Corner,
}

impl BilinearAlign {
    pub fn as_str(self) -> &'static str {
        match self {
            BilinearAlign::Center => "center",
            BilinearAlign::Corner => "corner",
        }
    }
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(BilinearAlign::Center),
            "corner" => Ok(BilinearAlign::Corner),
            other => Err(Error::parse(format!(
                "unknown bilinear alignment {other:?}; expected center|corner"
            ))),
        }
    }
}

fn axis_taps(in_e: usize, out_e: usize, align: BilinearAlign) -> Vec<(usize, usize, f64)> {
    (0..out_e)
        .map(|t| {
            let s = match align {
                BilinearAlign::Center => (t as f64 + 0.5) * in_e as f64 / out_e as f64 - 0.5,
                BilinearAlign::Corner => {
                    if out_e > 1 {
                        t as f64 * (in_e - 1) as f64 / (out_e - 1) as f64
                    } else {
                        0.0
                    }
                }
            };
            let i0f = s.floor();
            let f = s - i0f;
            let i0 = (i0f as isize).clamp(0, in_e as isize - 1) as usize;
            let i1 = (i0f as isize + 1).clamp(0, in_e as isize - 1) as usize;
            (i0, i1, f)
        })
        .collect()
}

pub fn bilinear_forward(
    x: &Tensor,
    oh: usize,
    ow: usize,
    align: BilinearAlign,
) -> Result<Tensor> {
    if oh == 0 || ow == 0 {
        return Err(Error::geometry("resize target must be at least 1x1".to_string()));
    }
    let (n, c, h, w) = x.shape();
    if (h, w) == (oh, ow) {
        return Ok(x.clone());
    }
    let ty = axis_taps(h, oh, align);
    let tx = axis_taps(w, ow, align);
    let mut y = Tensor::zeros(n, c, oh, ow);
    for bn in 0..n {
        for ch in 0..c {
            let xpl = x.plane(bn, ch).to_vec();
            let ypl = y.plane_mut(bn, ch);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let v00 = xpl[y0 * w + x0];
                    let v01 = xpl[y0 * w + x1];
                    let v10 = xpl[y1 * w + x0];
                    let v11 = xpl[y1 * w + x1];
                    let top = v00 + fx * (v01 - v00);
                    let bot = v10 + fx * (v11 - v10);
                    ypl[oy * ow + ox] = top + fy * (bot - top);
                }
            }
        }
    }
    Ok(y)
}

pub fn bilinear_backward(x: &Tensor, dy: &Tensor, align: BilinearAlign) -> Tensor {
    let (n, c, h, w) = x.shape();
    let (_, _, oh, ow) = dy.shape();
    if (h, w) == (oh, ow) {
        return dy.clone();
    }
    let ty = axis_taps(h, oh, align);
    let tx = axis_taps(w, ow, align);
    let mut dx = Tensor::zeros(n, c, h, w);
    for bn in 0..n {
        for ch in 0..c {
            let dpl = dy.plane(bn, ch).to_vec();
            let xg = dx.plane_mut(bn, ch);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = dpl[oy * ow + ox];
                    xg[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                    xg[y0 * w + x1] += g * (1.0 - fy) * fx;
                    xg[y1 * w + x0] += g * fy * (1.0 - fx);
                    xg[y1 * w + x1] += g * fy * fx;
                }
            }
        }
    }
    dx
}

// ── losses ──────────────────────────────────────────────────────────────

/// Mean cross-entropy over the batch for (n, classes, 1, 1) logits.
/// Returns the loss and the softmax probabilities for the backward pass.
pub fn softmax_ce_forward(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c, h, w) = logits.shape();
    if (h, w) != (1, 1) {
        return Err(Error::dimension(format!(
            "classification logits must be (n,c,1,1), got spatial {h}x{w}"
        )));
    }
    if labels.len() != n {
        return Err(Error::dimension(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut probs = Tensor::zeros(n, c, 1, 1);
    let mut loss = 0.0;
    for bn in 0..n {
        let y = labels[bn];
        if y >= c {
            return Err(Error::range(format!("label {y} outside {c} classes")));
        }
        let row = logits.row(bn);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row {
            z += (v - mx).exp();
        }
        let prow = &mut probs.data_mut()[bn * c..(bn + 1) * c];
        for (i, v) in row.iter().enumerate() {
            prow[i] = (v - mx).exp() / z;
        }
        loss -= row[y] - mx - z.ln();
    }
    Ok((loss / n as f64, probs))
}

pub fn softmax_ce_backward(probs: &Tensor, labels: &[usize], upstream: f64) -> Tensor {
    let (n, c, _, _) = probs.shape();
    let scale = upstream / n as f64;
    let mut d = probs.clone();
    for bn in 0..n {
        let row = &mut d.data_mut()[bn * c..(bn + 1) * c];
        row[labels[bn]] -= 1.0;
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    d
}

/// Mean cross-entropy over every pixel for (n, classes, h, w) logits.
pub fn pixel_ce_forward(logits: &Tensor, labels: &PixelLabels) -> Result<(f64, Tensor)> {
    let (n, c, h, w) = logits.shape();
    if (labels.n, labels.h, labels.w) != (n, h, w) {
        return Err(Error::dimension(format!(
            "label plane ({},{},{}) does not match logits ({n},{h},{w})",
            labels.n, labels.h, labels.w
        )));
    }
    let hw = h * w;
    let mut probs = Tensor::zeros(n, c, h, w);
    let mut loss = 0.0;
    for bn in 0..n {
        for p in 0..hw {
            let y = labels.data[bn * hw + p];
            if y >= c {
                return Err(Error::range(format!("pixel label {y} outside {c} classes")));
            }
            let base = bn * c * hw + p;
            let mut mx = f64::NEG_INFINITY;
            for ch in 0..c {
                mx = mx.max(logits.data()[base + ch * hw]);
            }
            let mut z = 0.0;
            for ch in 0..c {
                z += (logits.data()[base + ch * hw] - mx).exp();
            }
            for ch in 0..c {
                probs.data_mut()[base + ch * hw] = (logits.data()[base + ch * hw] - mx).exp() / z;
            }
            loss -= logits.data()[base + y * hw] - mx - z.ln();
        }
    }
    Ok((loss / (n * hw) as f64, probs))
}

pub fn pixel_ce_backward(probs: &Tensor, labels: &PixelLabels, upstream: f64) -> Tensor {
    let (n, c, h, w) = probs.shape();
    let hw = h * w;
    let scale = upstream / (n * hw) as f64;
    let mut d = probs.clone();
    for bn in 0..n {
        for p in 0..hw {
            let y = labels.data[bn * hw + p];
            d.data_mut()[bn * c * hw + y * hw + p] -= 1.0;
        }
    }
    d.data_mut().iter_mut().for_each(|v| *v *= scale);
    d
}

/// Mean squared error over all elements.
pub fn mse_forward(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dimension(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let m = pred.numel() as f64;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(s / m)
}

pub fn mse_backward(pred: &Tensor, target: &Tensor, upstream: f64) -> Tensor {
    let m = pred.numel() as f64;
    let mut d = pred.clone();
    for (dv, tv) in d.data_mut().iter_mut().zip(target.data()) {
        *dv = 2.0 * (*dv - tv) * upstream / m;
    }
    d
}

// ── pointwise and shape utilities ───────────────────────────────────────

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn sigmoid_backward(y: &Tensor, dy: &[f64]) -> Vec<f64> {
    y.data()
        .iter()
        .zip(dy)
        .map(|(yv, dv)| dv * yv * (1.0 - yv))
        .collect()
}

pub fn add_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(format!(
            "add shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut y = a.clone();
    for (yv, bv) in y.data_mut().iter_mut().zip(b.data()) {
        *yv += *bv;
    }
    Ok(y)
}

/// Concatenate along the channel axis.
pub fn concat_c_forward(xs: &[&Tensor]) -> Result<Tensor> {
    let first = xs
        .first()
        .ok_or_else(|| Error::argument("concat needs at least one tensor".to_string()))?;
    let (n, _, h, w) = first.shape();
    let mut ctot = 0;
    for t in xs {
        let (tn, tc, th, tw) = t.shape();
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::dimension(format!(
                "concat pieces disagree: ({tn},{tc},{th},{tw}) vs (n={n},h={h},w={w})"
            )));
        }
        ctot += tc;
    }
    let mut y = Tensor::zeros(n, ctot, h, w);
    for bn in 0..n {
        let mut co = 0;
        for t in xs {
            for ch in 0..t.c() {
                y.plane_mut(bn, co).copy_from_slice(t.plane(bn, ch));
                co += 1;
            }
        }
    }
    Ok(y)
}

/// Split a channel-concat gradient back into per-piece gradients.
pub fn concat_c_backward(dy: &Tensor, channel_splits: &[usize]) -> Vec<Tensor> {
    let (n, _, h, w) = dy.shape();
    let mut out = Vec::with_capacity(channel_splits.len());
    let mut c0 = 0;
    for &cs in channel_splits {
        let mut g = Tensor::zeros(n, cs, h, w);
        for bn in 0..n {
            for ch in 0..cs {
                g.plane_mut(bn, ch).copy_from_slice(dy.plane(bn, c0 + ch));
            }
        }
        out.push(g);
        c0 += cs;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ones_kernel(co: usize, ci: usize, k: usize) -> Tensor {
        Tensor::full(co, ci, k, k, 1.0)
    }
    fn no_bias(co: usize) -> Tensor {
        Tensor::zeros(1, co, 1, 1)
    }

    #[test]
    fn conv_ones_zero_pad_counts_window_overlap() {
        let x = Tensor::full(1, 1, 3, 3, 1.0);
        let y = conv2d_forward(&x, &ones_kernel(1, 1, 3), &no_bias(1), PaddingMode::zero(1), 1)
            .unwrap();
        assert_eq!(y.shape(), (1, 1, 3, 3));
        assert_eq!(
            y.data(),
            &[4., 6., 4., 6., 9., 6., 4., 6., 4.],
            "each output counts the taps that fall on real pixels"
        );
    }

    #[test]
    fn conv_ones_no_pad_keeps_only_full_windows() {
        let x = Tensor::full(1, 1, 3, 3, 1.0);
        let y =
            conv2d_forward(&x, &ones_kernel(1, 1, 3), &no_bias(1), PaddingMode::none(), 1).unwrap();
        assert_eq!(y.shape(), (1, 1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_partial_rescales_to_constant_on_constant_input() {
        let x = Tensor::full(1, 1, 3, 3, 1.0);
        let y = conv2d_forward(
            &x,
            &ones_kernel(1, 1, 3),
            &no_bias(1),
            PaddingMode::new(PadKind::Partial, 1),
            1,
        )
        .unwrap();
        for v in y.data() {
            assert_relative_eq!(*v, 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_bias_offsets_every_output() {
        let x = Tensor::full(1, 2, 2, 2, 1.0);
        let b = Tensor::new(1, 1, 1, 1, vec![0.5]).unwrap();
        let y = conv2d_forward(
            &x,
            &Tensor::full(1, 2, 1, 1, 2.0),
            &b,
            PaddingMode::none(),
            1,
        )
        .unwrap();
        for v in y.data() {
            assert_relative_eq!(*v, 4.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_stride_two_subsamples() {
        let x = Tensor::from_fn(1, 1, 5, 5, |_, _, y, x| (y * 5 + x) as f64);
        let w = Tensor::new(1, 1, 1, 1, vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &w, &no_bias(1), PaddingMode::none(), 2).unwrap();
        assert_eq!(y.shape(), (1, 1, 3, 3));
        assert_eq!(y.data(), &[0., 2., 4., 10., 12., 14., 20., 22., 24.]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(1, 3, 4, 4);
        let w = Tensor::zeros(2, 4, 3, 3);
        assert!(conv2d_forward(&x, &w, &no_bias(2), PaddingMode::zero(1), 1).is_err());
    }

    #[test]
    fn relu_clamps_and_routes_gradient() {
        let x = Tensor::new(1, 1, 1, 4, vec![-2.0, 0.0, 3.0, -0.5]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 3.0, 0.0]);
        let dx = relu_backward(&y, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(dx, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn maxpool_takes_first_max_on_ties() {
        let x = Tensor::new(1, 1, 2, 4, vec![1., 1., 0., 2., 1., 0., 2., 1.]).unwrap();
        let (y, arg) = maxpool2_forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
        // First window ties at value 1: positions 0, 1, 4 -> index 0 wins.
        assert_eq!(arg[0], 0);
        // Second window ties at value 2: scan order hits index 3 before 6.
        let dx = maxpool2_backward(x.numel(), &arg, &[1.0, 1.0]);
        assert_eq!(dx, vec![1., 0., 0., 1., 0., 0., 0., 0.]);
    }

    #[test]
    fn maxpool_rejects_odd_extents() {
        assert!(maxpool2_forward(&Tensor::zeros(1, 1, 3, 4)).is_err());
        assert!(maxpool2_forward(&Tensor::zeros(1, 1, 4, 4)).is_ok());
    }

    #[test]
    fn batchnorm_constant_input_yields_beta() {
        let x = Tensor::full(2, 3, 4, 4, 5.0);
        let gamma = Tensor::full(1, 3, 1, 1, 2.0);
        let beta = Tensor::from_fn(1, 3, 1, 1, |_, c, _, _| c as f64);
        let (y, mean, _) = bn_forward_train(&x, &gamma, &beta, BN_EPS).unwrap();
        for ch in 0..3 {
            assert_relative_eq!(mean[ch], 5.0);
            for bn in 0..2 {
                for v in y.plane(bn, ch) {
                    assert_relative_eq!(*v, ch as f64, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn batchnorm_train_normalizes_batch() {
        let x = Tensor::new(2, 1, 1, 2, vec![0., 2., 4., 6.]).unwrap();
        let gamma = Tensor::full(1, 1, 1, 1, 1.0);
        let beta = Tensor::zeros(1, 1, 1, 1);
        let (y, mean, inv_std) = bn_forward_train(&x, &gamma, &beta, 0.0).unwrap();
        assert_relative_eq!(mean[0], 3.0);
        let m: f64 = y.data().iter().sum::<f64>() / 4.0;
        let v: f64 = y.data().iter().map(|a| a * a).sum::<f64>() / 4.0;
        assert_relative_eq!(m, 0.0, epsilon = 1e-12);
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        assert!(inv_std[0] > 0.0);
    }

    #[test]
    fn batchnorm_eval_is_affine_in_input() {
        let gamma = Tensor::full(1, 1, 1, 1, 3.0);
        let beta = Tensor::full(1, 1, 1, 1, 1.0);
        let rm = vec![2.0];
        let rv = vec![4.0];
        let x1 = Tensor::full(1, 1, 1, 1, 2.0);
        let y1 = bn_forward_eval(&x1, &gamma, &beta, &rm, &rv, 0.0).unwrap();
        assert_relative_eq!(y1.data()[0], 1.0, epsilon = 1e-12); // at the mean -> beta
        let x2 = Tensor::full(1, 1, 1, 1, 4.0);
        let y2 = bn_forward_eval(&x2, &gamma, &beta, &rm, &rv, 0.0).unwrap();
        assert_relative_eq!(y2.data()[0], 4.0, epsilon = 1e-12); // 3*(4-2)/2 + 1
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut rm = vec![0.0];
        let mut rv = vec![1.0];
        // batch mean 10, biased var 4 over m=8 -> unbiased 4*8/7
        let inv_std = vec![1.0 / 2.0f64];
        bn_update_running(&mut rm, &mut rv, &[10.0], &inv_std, 8, 0.0, 0.1);
        assert_relative_eq!(rm[0], 1.0);
        assert_relative_eq!(rv[0], 0.9 + 0.1 * 4.0 * 8.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_matches_hand_product() {
        let x = Tensor::new(1, 3, 1, 1, vec![1., 2., 3.]).unwrap();
        let w = Tensor::new(2, 3, 1, 1, vec![1., 0., 0., 0., 1., 1.]).unwrap();
        let b = Tensor::new(1, 2, 1, 1, vec![0.5, -0.5]).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.5, 4.5]);
        let (dx, dw, db) = linear_backward(&x, &w, &Tensor::new(1, 2, 1, 1, vec![1., 1.]).unwrap());
        assert_eq!(dx.data(), &[1., 1., 1.]);
        assert_eq!(dw.data(), &[1., 2., 3., 1., 2., 3.]);
        assert_eq!(db.data(), &[1., 1.]);
    }

    #[test]
    fn gap_averages_each_plane() {
        let x = Tensor::from_fn(1, 2, 2, 2, |_, c, y, x| (c * 4 + y * 2 + x) as f64);
        let y = gap_forward(&x);
        assert_eq!(y.data(), &[1.5, 5.5]);
        let dx = gap_backward(&x, &Tensor::new(1, 2, 1, 1, vec![4.0, 8.0]).unwrap());
        assert_eq!(dx.plane(0, 0), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(dx.plane(0, 1), &[2.0, 2.0, 2.0, 2.0]);
    }

    /// Hand-evaluated center-aligned upsample of [[0,1],[2,3]] to 4x4.
    /// Sample coordinates are t/2 - 0.25 with edge clamping, which gives
    /// per-axis blend weights 0, 0.25, 0.75, 1 toward the second pixel.
    #[test]
    fn bilinear_center_2x2_to_4x4_matches_hand_values() {
        let x = Tensor::new(1, 1, 2, 2, vec![0., 1., 2., 3.]).unwrap();
        let y = bilinear_forward(&x, 4, 4, BilinearAlign::Center).unwrap();
        let expect = [
            0.0, 0.25, 0.75, 1.0, //
            0.5, 0.75, 1.25, 1.5, //
            1.5, 1.75, 2.25, 2.5, //
            2.0, 2.25, 2.75, 3.0,
        ];
        for (g, e) in y.data().iter().zip(&expect) {
            assert_relative_eq!(*g, *e, epsilon = 1e-12);
        }
    }

    /// Center-aligned downsample of a 4x4 ramp to 2x2 samples at the
    /// fractional centers (0.5, 0.5), (0.5, 2.5), (2.5, 0.5), (2.5, 2.5).
    #[test]
    fn bilinear_center_4x4_to_2x2_samples_fractional_centers() {
        let x = Tensor::from_fn(1, 1, 4, 4, |_, _, y, x| (y * 4 + x) as f64);
        let y = bilinear_forward(&x, 2, 2, BilinearAlign::Center).unwrap();
        let expect = [2.5, 4.5, 10.5, 12.5];
        for (g, e) in y.data().iter().zip(&expect) {
            assert_relative_eq!(*g, *e, epsilon = 1e-12);
        }
    }

    #[test]
    fn bilinear_corner_alignment_hits_corners_exactly() {
        let x = Tensor::new(1, 1, 2, 2, vec![0., 1., 2., 3.]).unwrap();
        let y = bilinear_forward(&x, 4, 4, BilinearAlign::Corner).unwrap();
        assert_relative_eq!(y.at(0, 0, 0, 0), 0.0);
        assert_relative_eq!(y.at(0, 0, 0, 3), 1.0);
        assert_relative_eq!(y.at(0, 0, 3, 0), 2.0);
        assert_relative_eq!(y.at(0, 0, 3, 3), 3.0);
        assert_relative_eq!(y.at(0, 0, 0, 1), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn bilinear_identity_when_sizes_match() {
        let x = Tensor::from_fn(1, 2, 3, 3, |_, c, y, x| (c + y + x) as f64);
        let y = bilinear_forward(&x, 3, 3, BilinearAlign::Center).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn softmax_ce_uniform_logits_gives_ln_classes() {
        let logits = Tensor::zeros(2, 4, 1, 1);
        let (loss, probs) = softmax_ce_forward(&logits, &[0, 3]).unwrap();
        assert_relative_eq!(loss, (4.0f64).ln(), epsilon = 1e-12);
        for v in probs.data() {
            assert_relative_eq!(*v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_ce_is_shift_invariant() {
        let a = Tensor::new(1, 3, 1, 1, vec![1., 2., 3.]).unwrap();
        let b = Tensor::new(1, 3, 1, 1, vec![101., 102., 103.]).unwrap();
        let (la, _) = softmax_ce_forward(&a, &[2]).unwrap();
        let (lb, _) = softmax_ce_forward(&b, &[2]).unwrap();
        assert_relative_eq!(la, lb, epsilon = 1e-9);
    }

    #[test]
    fn softmax_ce_rejects_bad_labels() {
        let logits = Tensor::zeros(1, 3, 1, 1);
        assert!(softmax_ce_forward(&logits, &[3]).is_err());
        assert!(softmax_ce_forward(&logits, &[0, 1]).is_err());
    }

    #[test]
    fn softmax_ce_gradient_sums_to_zero_per_row() {
        let logits = Tensor::new(1, 3, 1, 1, vec![0.2, -0.1, 0.4]).unwrap();
        let (_, probs) = softmax_ce_forward(&logits, &[1]).unwrap();
        let d = softmax_ce_backward(&probs, &[1], 1.0);
        let s: f64 = d.data().iter().sum();
        assert_relative_eq!(s, 0.0, epsilon = 1e-12);
        assert!(d.data()[1] < 0.0);
    }

    #[test]
    fn pixel_ce_matches_per_pixel_average() {
        let logits = Tensor::zeros(1, 2, 2, 2);
        let labels = PixelLabels::new(1, 2, 2, vec![0, 1, 0, 1]).unwrap();
        let (loss, _) = pixel_ce_forward(&logits, &labels).unwrap();
        assert_relative_eq!(loss, (2.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn pixel_ce_rejects_out_of_range_pixel_labels() {
        let logits = Tensor::zeros(1, 2, 1, 2);
        let labels = PixelLabels::new(1, 1, 2, vec![0, 2]).unwrap();
        assert!(pixel_ce_forward(&logits, &labels).is_err());
    }

    #[test]
    fn mse_measures_mean_square_gap() {
        let p = Tensor::new(1, 1, 1, 2, vec![1.0, 3.0]).unwrap();
        let t = Tensor::new(1, 1, 1, 2, vec![0.0, 0.0]).unwrap();
        assert_relative_eq!(mse_forward(&p, &t).unwrap(), 5.0);
        let d = mse_backward(&p, &t, 1.0);
        assert_eq!(d.data(), &[1.0, 3.0]);
    }

    #[test]
    fn sigmoid_squashes_and_differentiates() {
        let x = Tensor::new(1, 1, 1, 3, vec![0.0, 50.0, -50.0]).unwrap();
        let y = sigmoid_forward(&x);
        assert_relative_eq!(y.data()[0], 0.5);
        assert!(y.data()[1] > 0.999999);
        assert!(y.data()[2] < 0.000001);
        let d = sigmoid_backward(&y, &[1.0, 1.0, 1.0]);
        assert_relative_eq!(d[0], 0.25);
    }

    #[test]
    fn concat_stacks_channels_and_splits_back() {
        let a = Tensor::full(1, 1, 2, 2, 1.0);
        let b = Tensor::full(1, 2, 2, 2, 2.0);
        let y = concat_c_forward(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), (1, 3, 2, 2));
        assert_eq!(y.plane(0, 0), &[1.0; 4]);
        assert_eq!(y.plane(0, 2), &[2.0; 4]);
        let parts = concat_c_backward(&y, &[1, 2]);
        assert_eq!(parts[0].shape(), (1, 1, 2, 2));
        assert_eq!(parts[1].shape(), (1, 2, 2, 2));
        assert_eq!(parts[1].plane(0, 1), &[2.0; 4]);
    }

    #[test]
    fn add_requires_matching_shapes() {
        let a = Tensor::zeros(1, 1, 2, 2);
        let b = Tensor::zeros(1, 1, 2, 3);
        assert!(add_forward(&a, &b).is_err());
    }
}
