//! Evaluation measures and spatial aggregations: rank correlation, MAE,
//! accuracy, mean IoU, per-location tables, distance-to-border rings, and
//! percentage ring regions.

use crate::error::{Error, Result};
use crate::ops::PixelLabels;
use crate::tensor::Tensor;

// ── rank correlation ────────────────────────────────────────────────────

/// Average ranks (1-based); tied values share the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("rank input must not contain NaN"));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has zero variance.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (
        a.iter().sum::<f64>() / n,
        b.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Spearman rank correlation: Pearson over average-ranked values.
/// Constant inputs yield 0 (no ordering information).
pub fn spearman(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dimension(format!(
            "rank correlation needs equal sizes, got {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::argument(
            "rank correlation needs at least 2 values".to_string(),
        ));
    }
    Ok(pearson(&average_ranks(pred), &average_ranks(gt)))
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dimension(format!(
            "mae needs equal sizes, got {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::argument("mae needs at least 1 value".to_string()));
    }
    let s: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum();
    Ok(s / pred.len() as f64)
}

// ── classification ──────────────────────────────────────────────────────

/// Argmax per row with first-index tie-break.
pub fn predicted_classes(logits: &Tensor) -> Vec<usize> {
    (0..logits.n())
        .map(|bn| {
            let row = logits.row(bn);
            let mut best = 0;
            for (i, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, _, h, w) = logits.shape();
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
    let pred = predicted_classes(logits);
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / n as f64)
}

/// Per-pixel argmax over the channel axis with first-index tie-break.
pub fn predicted_pixel_labels(logits: &Tensor) -> PixelLabels {
    let (n, c, h, w) = logits.shape();
    let hw = h * w;
    let mut data = vec![0usize; n * hw];
    for bn in 0..n {
        for p in 0..hw {
            let base = bn * c * hw + p;
            let mut best = 0;
            for ch in 1..c {
                if logits.data()[base + ch * hw] > logits.data()[base + best * hw] {
                    best = ch;
                }
            }
            data[bn * hw + p] = best;
        }
    }
    PixelLabels { n, h, w, data }
}

// ── mean IoU ────────────────────────────────────────────────────────────

/// Running intersection/union counts per class across any number of
/// label batches, optionally restricted by a pixel mask.
#[derive(Clone, Debug)]
pub struct IouAccum {
    inter: Vec<u64>,
    pred_count: Vec<u64>,
    gt_count: Vec<u64>,
}

impl IouAccum {
    pub fn new(num_classes: usize) -> Self {
        IouAccum {
            inter: vec![0; num_classes],
            pred_count: vec![0; num_classes],
            gt_count: vec![0; num_classes],
        }
    }

    pub fn add(&mut self, pred: &[usize], gt: &[usize]) -> Result<()> {
        self.add_masked(pred, gt, None)
    }

    pub fn add_masked(&mut self, pred: &[usize], gt: &[usize], mask: Option<&[bool]>) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::dimension(format!(
                "label batches differ in size: {} vs {}",
                pred.len(),
                gt.len()
            )));
        }
        if let Some(m) = mask {
            if m.len() != pred.len() {
                return Err(Error::dimension(format!(
                    "mask size {} does not match labels {}",
                    m.len(),
                    pred.len()
                )));
            }
        }
        let nc = self.inter.len();
        for i in 0..pred.len() {
            if let Some(m) = mask {
                if !m[i] {
                    continue;
                }
            }
            let (p, g) = (pred[i], gt[i]);
            if p >= nc || g >= nc {
                return Err(Error::range(format!(
                    "label {} outside {nc} classes",
                    p.max(g)
                )));
            }
            self.pred_count[p] += 1;
            self.gt_count[g] += 1;
            if p == g {
                self.inter[p] += 1;
            }
        }
        Ok(())
    }

    pub fn pixels_seen(&self) -> u64 {
        self.gt_count.iter().sum()
    }

    /// Mean IoU over classes present in either side; None if no pixels
    /// were accumulated (undefined, never zero).
    pub fn miou(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut present = 0;
        for c in 0..self.inter.len() {
            let union = self.pred_count[c] + self.gt_count[c] - self.inter[c];
            if union == 0 {
                continue;
            }
            sum += self.inter[c] as f64 / union as f64;
            present += 1;
        }
        if present == 0 {
            None
        } else {
            Some(sum / present as f64)
        }
    }
}

pub fn miou(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<f64> {
    let mut acc = IouAccum::new(num_classes);
    acc.add(pred, gt)?;
    acc.miou().ok_or_else(|| Error::argument("miou over zero pixels".to_string()))
}

// ── per-location table ──────────────────────────────────────────────────

/// One metric value per grid cell, indexed by the 1-based row-major
/// location L.
#[derive(Clone, Debug)]
pub struct LocationTable {
    pub k: usize,
    values: Vec<f64>,
}

impl LocationTable {
    /// Evaluate `f` for every location in L order.
    pub fn from_fn(k: usize, mut f: impl FnMut(usize) -> Result<f64>) -> Result<Self> {
        let values = (1..=k * k).map(&mut f).collect::<Result<Vec<f64>>>()?;
        Ok(LocationTable { k, values })
    }

    pub fn at(&self, location: usize) -> f64 {
        self.values[location - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unweighted mean over cells, summed in L order.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Distance of a 1-based location to the nearest grid border.
pub fn border_distance(location: usize, k: usize) -> usize {
    let (row, col) = ((location - 1) / k, (location - 1) % k);
    row.min(col).min(k - 1 - row).min(k - 1 - col)
}

/// Per-ring aggregation of a LocationTable; ring d holds the cells at
/// border distance d.
#[derive(Clone, Debug)]
pub struct RingReport {
    pub k: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
    total: f64,
}

impl RingReport {
    pub fn rings(&self) -> usize {
        self.sums.len()
    }

    pub fn count(&self, d: usize) -> usize {
        self.counts[d]
    }

    pub fn mean(&self, d: usize) -> f64 {
        self.sums[d] / self.counts[d] as f64
    }

    /// Count-weighted mean across rings. The total is accumulated in the
    /// same L order as `LocationTable::mean`, so the two agree exactly.
    pub fn weighted_mean(&self) -> f64 {
        self.total / self.counts.iter().sum::<usize>() as f64
    }
}

pub fn distance_rings(table: &LocationTable) -> RingReport {
    let k = table.k;
    let rings = (k - 1) / 2 + 1;
    let mut sums = vec![0.0; rings];
    let mut counts = vec![0usize; rings];
    let mut total = 0.0;
    for loc in 1..=k * k {
        let d = border_distance(loc, k);
        sums[d] += table.at(loc);
        counts[d] += 1;
        total += table.at(loc);
    }
    RingReport { k, sums, counts, total }
}

// ── percentage ring regions ─────────────────────────────────────────────

/// Relative border distance of pixel (y,x) in percent: 100 * d / (min(h,w)/2),
/// clipped to [0,100].
pub fn relative_border_distance(y: usize, x: usize, h: usize, w: usize) -> f64 {
    let d = y.min(x).min(h - 1 - y).min(w - 1 - x) as f64;
    (100.0 * d / (h.min(w) as f64 / 2.0)).min(100.0)
}

/// Membership mask for the band (lo,hi] in percent. Pixels at distance 0
/// belong to the band whose lower bound is 0, keeping disjoint bands that
/// cover (0,100] an exact partition of all pixels.
pub fn band_mask(h: usize, w: usize, lo: f64, hi: f64) -> Vec<bool> {
    let mut m = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let r = relative_border_distance(y, x, h, w);
            m[y * w + x] = (r > lo && r <= hi) || (r == 0.0 && lo == 0.0);
        }
    }
    m
}

pub fn check_bands(bands: &[(f64, f64)]) -> Result<()> {
    for &(lo, hi) in bands {
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::argument(format!(
                "band ({lo},{hi}] must satisfy 0 <= lo < hi <= 100"
            )));
        }
    }
    Ok(())
}

/// Mean IoU restricted to each band; None where a band holds no pixels.
pub fn ring_region_miou(
    pred: &PixelLabels,
    gt: &PixelLabels,
    num_classes: usize,
    bands: &[(f64, f64)],
) -> Result<Vec<Option<f64>>> {
    check_bands(bands)?;
    if (pred.n, pred.h, pred.w) != (gt.n, gt.h, gt.w) {
        return Err(Error::dimension(format!(
            "label planes differ: ({},{},{}) vs ({},{},{})",
            pred.n, pred.h, pred.w, gt.n, gt.h, gt.w
        )));
    }
    let hw = pred.h * pred.w;
    let mut out = Vec::with_capacity(bands.len());
    for &(lo, hi) in bands {
        let mask = band_mask(pred.h, pred.w, lo, hi);
        let mut acc = IouAccum::new(num_classes);
        for bn in 0..pred.n {
            acc.add_masked(
                &pred.data[bn * hw..(bn + 1) * hw],
                &gt.data[bn * hw..(bn + 1) * hw],
                Some(&mask),
            )?;
        }
        out.push(acc.miou());
    }
    Ok(out)
}
