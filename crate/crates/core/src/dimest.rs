//! Dimensionality estimation of semantic factors in latent vectors: build
//! image pairs that share exactly one factor, sum per-dimension Pearson
//! correlations across the pair population, and split the latent budget by
//! a softmax over the factor scores.

use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::rng::{rng_from, RngExt};
use crate::synth::{compose_grid_sample, CanvasColor, GridSpec, Normalize};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Location,
    Class,
    Residual,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Location, Factor::Class, Factor::Residual];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Location => "location",
            Factor::Class => "class",
            Factor::Residual => "residual",
        }
    }
}

/// What one side of a pair was composed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairMeta {
    pub location: usize,
    pub class: usize,
    /// Index into the sampler's canvas palette.
    pub canvas: usize,
}

pub struct PairBatch {
    pub factor: Factor,
    pub pairs: Vec<(Tensor, Tensor)>,
    pub meta: Vec<(PairMeta, PairMeta)>,
}

/// Sampling space for pair construction.
pub struct PairSpec {
    pub k: usize,
    pub patch: usize,
    pub canvases: Vec<CanvasColor>,
    pub norm: Normalize,
}

/// Draw `n` pairs sharing exactly the named factor: Location pairs keep L
/// and differ in class and canvas; Class pairs keep the class and differ
/// in L and canvas; Residual pairs differ in all three.
pub fn sample_pairs(
    factor: Factor,
    patches: &[(Tensor, usize)],
    spec: &PairSpec,
    n: usize,
    seed: u64,
) -> Result<PairBatch> {
    if n == 0 {
        return Err(Error::argument("pair count must be at least 1".to_string()));
    }
    let classes = patches.iter().map(|(_, l)| l + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, (_, l)) in patches.iter().enumerate() {
        by_class[*l].push(i);
    }
    if by_class.iter().any(|g| g.is_empty()) {
        return Err(Error::argument(
            "every class label up to the maximum needs at least one patch".to_string(),
        ));
    }
    let needs_two_classes = matches!(factor, Factor::Location | Factor::Residual);
    if needs_two_classes && classes < 2 {
        return Err(Error::argument(format!(
            "{} pairs need at least 2 classes, got {classes}",
            factor.as_str()
        )));
    }
    if spec.canvases.len() < 2 {
        return Err(Error::argument(format!(
            "{} pairs need at least 2 canvas colors, got {}",
            factor.as_str(),
            spec.canvases.len()
        )));
    }
    let base = GridSpec::new(spec.k, spec.patch, spec.canvases[0])?;
    let cells = base.cells();

    let mut rng = rng_from(seed);
    // Uniform draw over 0..count excluding `avoid`.
    fn other(rng: &mut crate::rng::Rng, count: usize, avoid: usize) -> usize {
        (avoid + rng.gen_range(1..count)) % count
    }
    // Uniform draw over 1..=cells excluding `avoid` (1-based locations).
    fn other_loc(rng: &mut crate::rng::Rng, cells: usize, avoid: usize) -> usize {
        (avoid - 1 + rng.gen_range(1..cells)) % cells + 1
    }

    let mut pairs = Vec::with_capacity(n);
    let mut meta = Vec::with_capacity(n);
    for _ in 0..n {
        let (ma, mb) = match factor {
            Factor::Location => {
                let l = rng.gen_range(1..=cells);
                let ca = rng.gen_range(0..classes);
                let cb = other(&mut rng, classes, ca);
                let va = rng.gen_range(0..spec.canvases.len());
                let vb = other(&mut rng, spec.canvases.len(), va);
                (
                    PairMeta { location: l, class: ca, canvas: va },
                    PairMeta { location: l, class: cb, canvas: vb },
                )
            }
            Factor::Class => {
                let c = rng.gen_range(0..classes);
                let la = rng.gen_range(1..=cells);
                let lb = other_loc(&mut rng, cells, la);
                let va = rng.gen_range(0..spec.canvases.len());
                let vb = other(&mut rng, spec.canvases.len(), va);
                (
                    PairMeta { location: la, class: c, canvas: va },
                    PairMeta { location: lb, class: c, canvas: vb },
                )
            }
            Factor::Residual => {
                let la = rng.gen_range(1..=cells);
                let lb = other_loc(&mut rng, cells, la);
                let ca = rng.gen_range(0..classes);
                let cb = other(&mut rng, classes, ca);
                let va = rng.gen_range(0..spec.canvases.len());
                let vb = other(&mut rng, spec.canvases.len(), va);
                (
                    PairMeta { location: la, class: ca, canvas: va },
                    PairMeta { location: lb, class: cb, canvas: vb },
                )
            }
        };
        let side = |m: PairMeta, rng: &mut crate::rng::Rng| -> Result<Tensor> {
            let group = &by_class[m.class];
            let pi = group[rng.gen_range(0..group.len())];
            let g = GridSpec {
                canvas: spec.canvases[m.canvas],
                ..base
            };
            Ok(compose_grid_sample(&patches[pi].0, m.class, m.location, &g, &spec.norm)?.image)
        };
        let a = side(ma, &mut rng)?;
        let b = side(mb, &mut rng)?;
        pairs.push((a, b));
        meta.push((ma, mb));
    }
    Ok(PairBatch { factor, pairs, meta })
}

/// Sum over latent dimensions of the Pearson correlation between the two
/// sides' encodings across the pair population. Zero-variance dimensions
/// contribute 0.
pub fn factor_correlation(
    mut encode: impl FnMut(&Tensor) -> Result<Vec<f64>>,
    batch: &PairBatch,
) -> Result<f64> {
    if batch.pairs.len() < 2 {
        return Err(Error::argument(format!(
            "correlation needs at least 2 pairs, got {}",
            batch.pairs.len()
        )));
    }
    let mut za: Vec<Vec<f64>> = Vec::with_capacity(batch.pairs.len());
    let mut zb: Vec<Vec<f64>> = Vec::with_capacity(batch.pairs.len());
    for (a, b) in &batch.pairs {
        za.push(encode(a)?);
        zb.push(encode(b)?);
    }
    let n = za[0].len();
    if za.iter().chain(&zb).any(|z| z.len() != n) {
        return Err(Error::contract(
            "encoder returned vectors of differing lengths".to_string(),
        ));
    }
    let mut c = 0.0;
    let mut col_a = vec![0.0; za.len()];
    let mut col_b = vec![0.0; zb.len()];
    for i in 0..n {
        for (p, z) in za.iter().enumerate() {
            col_a[p] = z[i];
        }
        for (p, z) in zb.iter().enumerate() {
            col_b[p] = z[i];
        }
        c += pearson(&col_a, &col_b);
    }
    Ok(c)
}

/// Split `n` dimensions by a softmax over the factor scores, flooring each
/// share: alloc_k = floor(exp(C_k)/sum exp(C_f) * n).
pub fn allocate_dims(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    if scores.is_empty() || n == 0 {
        return Err(Error::argument(
            "allocation needs at least one score and one dimension".to_string(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument(format!(
            "factor scores must be finite, got {scores:?}"
        )));
    }
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps
        .iter()
        .map(|e| (e / z * n as f64).floor() as usize)
        .collect())
}

/// Scores and dimension split for the three standard factors.
pub struct FactorReport {
    pub n: usize,
    pub c_location: f64,
    pub c_class: f64,
    pub c_residual: f64,
    pub alloc: [usize; 3],
}

impl FactorReport {
    pub fn from_scores(c_location: f64, c_class: f64, c_residual: f64, n: usize) -> Result<Self> {
        let alloc = allocate_dims(&[c_location, c_class, c_residual], n)?;
        Ok(FactorReport {
            n,
            c_location,
            c_class,
            c_residual,
            alloc: [alloc[0], alloc[1], alloc[2]],
        })
    }

    /// Share of the latent budget in percent, mirroring alloc/n.
    pub fn pct(&self, i: usize) -> f64 {
        self.alloc[i] as f64 / self.n as f64 * 100.0
    }
}
