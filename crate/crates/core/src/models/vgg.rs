//! Small VGG-style backbone and the position-readout probe that regresses
//! position maps from its frozen stage features.

use crate::border::{self, PaddingMode};
use crate::error::{Error, Result};
use crate::models::layers::{BatchNorm2d, Conv2d, Linear};
use crate::ops::{self, BilinearAlign};
use crate::optim::Param;
use crate::rng::rng_from;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const VGG5_WIDTHS: [usize; 4] = [32, 64, 128, 256];
const VGG5_KERNEL: usize = 3;
/// Blocks followed by a 2x2 maxpool (all but the last).
const VGG5_POOLED: usize = 3;

/// Four single-conv blocks (conv, batchnorm, relu; pool after the first
/// three), then global average pooling into a linear head.
pub struct Vgg5 {
    pub mode: PaddingMode,
    pub classes: usize,
    blocks: Vec<(Conv2d, BatchNorm2d)>,
    fc: Linear,
}

pub fn build_vgg5(classes: usize, mode: PaddingMode, seed: u64) -> Result<Vgg5> {
    if classes < 2 {
        return Err(Error::argument(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut blocks = Vec::with_capacity(VGG5_WIDTHS.len());
    let mut ci = 3;
    for (i, &co) in VGG5_WIDTHS.iter().enumerate() {
        let name = format!("b{}", i + 1);
        let conv = Conv2d::new(&format!("{name}.conv"), ci, co, VGG5_KERNEL, mode, 1, &mut rng);
        let bn = BatchNorm2d::new(&format!("{name}.bn"), co);
        blocks.push((conv, bn));
        ci = co;
    }
    let fc = Linear::new("fc", *VGG5_WIDTHS.last().unwrap(), classes, &mut rng);
    Ok(Vgg5 { mode, classes, blocks, fc })
}

impl Vgg5 {
    pub fn stages(&self) -> usize {
        self.blocks.len()
    }

    /// Simulate the spatial sizes each block emits (after its pool where
    /// one exists). Fails where a conv or pool cannot fit.
    pub fn check_geometry(&self, side: usize) -> Result<Vec<usize>> {
        let mut s = side;
        let mut out = Vec::with_capacity(self.blocks.len());
        for i in 0..self.blocks.len() {
            let (h, _) = border::conv_out_size(
                s,
                s,
                VGG5_KERNEL,
                VGG5_KERNEL,
                self.mode.rings(),
                1,
            )
            .map_err(|e| Error::geometry(format!("block {}: {e}", i + 1)))?;
            s = h;
            if i < VGG5_POOLED {
                if s % 2 != 0 || s == 0 {
                    return Err(Error::geometry(format!(
                        "block {}: pool needs an even extent, got {s}",
                        i + 1
                    )));
                }
                s /= 2;
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Smallest input side >= `want` whose geometry fits this mode.
    pub fn fit_input_side(&self, want: usize) -> usize {
        let mut s = want;
        while self.check_geometry(s).is_err() {
            s += 1;
        }
        s
    }

    pub fn forward_train(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        let pooled = VGG5_POOLED;
        for (i, (conv, bn)) in self.blocks.iter_mut().enumerate() {
            h = conv.forward(tape, h)?;
            h = bn.forward_train(tape, h)?;
            h = tape.relu(h);
            if i < pooled {
                h = tape.maxpool2(h)?;
            }
        }
        let g = tape.gap(h);
        self.fc.forward(tape, g)
    }

    pub fn infer_logits(&self, x: &Tensor) -> Result<Tensor> {
        let feats = self.stage_features(x)?;
        let g = ops::gap_forward(feats.last().expect("vgg has blocks"));
        self.fc.infer(&g)
    }

    /// Frozen per-block outputs (post-pool), in depth order.
    pub fn stage_features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, (conv, bn)) in self.blocks.iter().enumerate() {
            h = conv.infer(&h)?;
            h = bn.infer(&h)?;
            h = ops::relu_forward(&h);
            if i < VGG5_POOLED {
                let (p, _) = ops::maxpool2_forward(&h)?;
                h = p;
            }
            out.push(h.clone());
        }
        Ok(out)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = Vec::new();
        for (conv, bn) in &mut self.blocks {
            ps.extend(conv.params_mut());
            ps.extend(bn.params_mut());
        }
        ps.extend(self.fc.params_mut());
        ps
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut ps = Vec::new();
        for (conv, bn) in &self.blocks {
            ps.extend(conv.params());
            ps.extend(bn.params());
        }
        ps.extend(self.fc.params());
        ps
    }

    /// Every tensor needed to restore the model: parameters plus batchnorm
    /// running buffers.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        for (i, (_, bn)) in self.blocks.iter().enumerate() {
            out.extend(bn.buffers(&format!("b{}.bn", i + 1)));
        }
        out
    }

    pub fn load_state(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        load_into(entries, self.params_mut())?;
        for (i, (_, bn)) in self.blocks.iter_mut().enumerate() {
            let name = format!("b{}.bn", i + 1);
            let mean = find_entry(entries, &format!("{name}.run_mean"))?;
            let var = find_entry(entries, &format!("{name}.run_var"))?;
            bn.set_buffers(mean, var)?;
        }
        Ok(())
    }
}

pub(crate) fn find_entry<'a>(entries: &'a [(String, Tensor)], name: &str) -> Result<&'a Tensor> {
    entries
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::contract(format!("restore is missing tensor {name:?}")))
}

pub(crate) fn load_into(entries: &[(String, Tensor)], params: Vec<&mut Param>) -> Result<()> {
    for p in params {
        let t = find_entry(entries, &p.name)?;
        if t.shape() != p.value.shape() {
            return Err(Error::dimension(format!(
                "restored tensor {:?} has shape {:?}, expected {:?}",
                p.name,
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.clone();
        p.grad = None;
    }
    Ok(())
}

// ── position probe ──────────────────────────────────────────────────────

pub const PROBE_ALIGN_DEFAULT: usize = 28;

/// Single-conv readout over frozen, size-aligned, channel-concatenated
/// backbone features; sigmoid output map.
pub struct PosProbe {
    /// 1-based stage indices read from the backbone.
    pub taps: Vec<usize>,
    pub align: usize,
    pub readout: Conv2d,
}

pub fn build_probe(
    stage_widths: &[usize],
    taps: &[usize],
    align: usize,
    readout_mode: PaddingMode,
    seed: u64,
) -> Result<PosProbe> {
    if taps.is_empty() {
        return Err(Error::argument("probe needs at least one stage tap".to_string()));
    }
    let mut in_ch = 0;
    for &t in taps {
        if t == 0 || t > stage_widths.len() {
            return Err(Error::range(format!(
                "stage tap {t} outside 1..={}",
                stage_widths.len()
            )));
        }
        in_ch += stage_widths[t - 1];
    }
    if align < 3 {
        return Err(Error::geometry(format!(
            "align size {align} cannot feed a 3x3 readout"
        )));
    }
    let mut rng = rng_from(seed);
    let readout = Conv2d::new_xavier("readout", in_ch, 1, 3, readout_mode, 1, &mut rng);
    Ok(PosProbe {
        taps: taps.to_vec(),
        align,
        readout,
    })
}

impl PosProbe {
    /// Resize each tapped stage to the align size and stack channels.
    pub fn aligned_concat(&self, features: &[Tensor]) -> Result<Tensor> {
        let mut resized = Vec::with_capacity(self.taps.len());
        for &t in &self.taps {
            if t == 0 || t > features.len() {
                return Err(Error::range(format!(
                    "stage tap {t} outside 1..={}",
                    features.len()
                )));
            }
            resized.push(ops::bilinear_forward(
                &features[t - 1],
                self.align,
                self.align,
                BilinearAlign::Center,
            )?);
        }
        let refs: Vec<&Tensor> = resized.iter().collect();
        ops::concat_c_forward(&refs)
    }

    /// Spatial size of the output map.
    pub fn out_size(&self) -> Result<usize> {
        let (h, _) = border::conv_out_size(
            self.align,
            self.align,
            3,
            3,
            self.readout.mode.rings(),
            1,
        )?;
        Ok(h)
    }

    pub fn forward_train(&self, tape: &mut Tape, aligned: Var) -> Result<Var> {
        let y = self.readout.forward(tape, aligned)?;
        Ok(tape.sigmoid(y))
    }

    pub fn infer(&self, aligned: &Tensor) -> Result<Tensor> {
        Ok(ops::sigmoid_forward(&self.readout.infer(aligned)?))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.readout.params_mut().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::border::PadKind;

    #[test]
    fn padded_geometry_matches_the_published_ladder() {
        let m = build_vgg5(10, PaddingMode::zero(1), 1).unwrap();
        assert_eq!(m.check_geometry(56).unwrap(), vec![28, 14, 7, 7]);
    }

    #[test]
    fn unpadded_geometry_fails_at_the_second_pool_on_56() {
        let m = build_vgg5(10, PaddingMode::none(), 1).unwrap();
        let err = m.check_geometry(56).unwrap_err();
        assert!(
            err.to_string().contains("block 2"),
            "54 pools to 27, then 25 cannot pool: {err}"
        );
        assert_eq!(m.fit_input_side(56), 62, "62 -> 30/14/6/4 fits");
        assert_eq!(m.check_geometry(62).unwrap(), vec![30, 14, 6, 4]);
    }

    #[test]
    fn all_padded_modes_share_the_same_geometry() {
        for kind in [PadKind::Zero, PadKind::Reflect, PadKind::Replicate, PadKind::Circular, PadKind::Partial] {
            let m = build_vgg5(4, PaddingMode::new(kind, 1), 1).unwrap();
            assert_eq!(m.check_geometry(56).unwrap(), vec![28, 14, 7, 7], "{kind:?}");
        }
    }

    #[test]
    fn stage_features_report_widths_and_sizes() {
        let m = build_vgg5(4, PaddingMode::zero(1), 3).unwrap();
        let x = Tensor::full(2, 3, 56, 56, 0.25);
        let f = m.stage_features(&x).unwrap();
        assert_eq!(f.len(), 4);
        let shapes: Vec<_> = f.iter().map(|t| t.shape()).collect();
        assert_eq!(
            shapes,
            vec![(2, 32, 28, 28), (2, 64, 14, 14), (2, 128, 7, 7), (2, 256, 7, 7)]
        );
        assert!(f.iter().all(|t| t.all_finite()));
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = build_vgg5(10, PaddingMode::zero(1), 9).unwrap();
        let b = build_vgg5(10, PaddingMode::zero(1), 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value, pb.value);
        }
    }

    #[test]
    fn classifier_emits_one_logit_row_per_input() {
        let m = build_vgg5(5, PaddingMode::zero(1), 2).unwrap();
        let x = Tensor::full(3, 3, 56, 56, 0.1);
        let y = m.infer_logits(&x).unwrap();
        assert_eq!(y.shape(), (3, 5, 1, 1));
    }

    #[test]
    fn state_round_trips_through_load() {
        let mut a = build_vgg5(4, PaddingMode::zero(1), 7).unwrap();
        let mut b = build_vgg5(4, PaddingMode::zero(1), 8).unwrap();
        let x = Tensor::full(1, 3, 56, 56, 0.3);
        let ya = a.infer_logits(&x).unwrap();
        b.load_state(&a.state()).unwrap();
        let yb = b.infer_logits(&x).unwrap();
        assert_eq!(ya, yb, "restored model must behave identically");
        // Mutate a marker and confirm load catches shape mismatches.
        let mut st = a.state();
        st[0].1 = Tensor::zeros(1, 1, 1, 1);
        assert!(b.load_state(&st).is_err());
        let _ = a.params_mut();
    }

    #[test]
    fn probe_channel_count_sums_tap_widths() {
        let p5 = build_probe(&VGG5_WIDTHS, &[4], 28, PaddingMode::none(), 1).unwrap();
        assert_eq!(p5.readout.w.value.shape(), (1, 256, 3, 3));
        let pall = build_probe(&VGG5_WIDTHS, &[1, 2, 3, 4], 28, PaddingMode::none(), 1).unwrap();
        assert_eq!(pall.readout.w.value.c(), 32 + 64 + 128 + 256);
        assert_eq!(pall.out_size().unwrap(), 26, "3x3 no-pad shrinks 28 to 26");
        let padded = build_probe(&VGG5_WIDTHS, &[1], 28, PaddingMode::zero(2), 1).unwrap();
        assert_eq!(padded.out_size().unwrap(), 30);
    }

    #[test]
    fn probe_rejects_bad_taps() {
        assert!(build_probe(&VGG5_WIDTHS, &[], 28, PaddingMode::none(), 1).is_err());
        assert!(build_probe(&VGG5_WIDTHS, &[5], 28, PaddingMode::none(), 1).is_err());
        assert!(build_probe(&VGG5_WIDTHS, &[0], 28, PaddingMode::none(), 1).is_err());
    }

    #[test]
    fn probe_aligns_concats_and_maps_to_unit_interval() {
        let backbone = build_vgg5(4, PaddingMode::zero(1), 4).unwrap();
        let probe = build_probe(&VGG5_WIDTHS, &[1, 4], 28, PaddingMode::none(), 5).unwrap();
        let x = Tensor::from_fn(1, 3, 56, 56, |_, c, y, _| (c + y) as f64 * 0.01);
        let feats = backbone.stage_features(&x).unwrap();
        let cat = probe.aligned_concat(&feats).unwrap();
        assert_eq!(cat.shape(), (1, 32 + 256, 28, 28));
        let out = probe.infer(&cat).unwrap();
        assert_eq!(out.shape(), (1, 1, 26, 26));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
