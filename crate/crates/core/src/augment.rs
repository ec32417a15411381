//! Mixup and time-wise masking ("dropstep").

use alloc::vec::Vec;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};

use crate::error::{invalid, shape, Result};
use crate::types::{ClipMetadata, Origin};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub mixup_alpha: f64,
    pub dropstep_ratio: f64,
    pub dropstep_count: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mixup_alpha: 0.5,
            dropstep_ratio: 0.25,
            dropstep_count: 1,
        }
    }
}

fn check_unit(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(alloc::format!("mixup weight {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Convex combination of two examples and their targets.
pub fn mixup(
    x1: ArrayView2<'_, f64>,
    x2: ArrayView2<'_, f64>,
    y1: &[f64],
    y2: &[f64],
    lambda: f64,
) -> Result<(Array2<f64>, Vec<f64>)> {
    if x1.dim() != x2.dim() || y1.len() != y2.len() {
        return Err(shape("mixup operands differ in shape"));
    }
    check_unit(lambda)?;
    let x = &x1 * lambda + &x2 * (1.0 - lambda);
    let y = y1.iter().zip(y2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
    Ok((x, y))
}

/// Result of [`mixup_within_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub features: Array3<f64>,
    pub targets: Array2<f64>,
    /// Partner of every row; `partners[i] == i` means the row is unchanged.
    pub partners: Vec<usize>,
    /// Weight used for each dataset family, when that family was mixed.
    pub lambdas: Vec<(Origin, f64)>,
}

/// Mixup where partners are drawn only from clips of the same dataset
/// family. `features` is `[B × F × T]`, `targets` is `[B × C]`.
pub fn mixup_within_dataset<R: Rng + ?Sized>(
    features: ArrayView3<'_, f64>,
    targets: ArrayView2<'_, f64>,
    metas: &[ClipMetadata],
    alpha: f64,
    rng: &mut R,
) -> Result<MixedBatch> {
    let b = features.dim().0;
    if metas.len() != b || targets.nrows() != b {
        return Err(shape("metadata, features and targets must align on the batch axis"));
    }
    let beta = Beta::new(alpha, alpha).map_err(|_| invalid("mixup alpha must be positive"))?;

    let mut out_x = features.to_owned();
    let mut out_y = targets.to_owned();
    let mut partners: Vec<usize> = (0..b).collect();
    let mut lambdas = Vec::new();
    for family in [Origin::Desed, Origin::Maestro] {
        let members: Vec<usize> = (0..b).filter(|&i| metas[i].dataset.family() == family).collect();
        if members.len() < 2 {
            continue;
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(rng);
        let lambda = beta.sample(rng);
        lambdas.push((family, lambda));
        for (&i, &j) in members.iter().zip(&shuffled) {
            partners[i] = j;
            if i == j {
                continue;
            }
            let xi = features.index_axis(Axis(0), i);
            let xj = features.index_axis(Axis(0), j);
            out_x.index_axis_mut(Axis(0), i).assign(&(&xi * lambda + &xj * (1.0 - lambda)));
            let yi = targets.row(i);
            let yj = targets.row(j);
            out_y.row_mut(i).assign(&(&yi * lambda + &yj * (1.0 - lambda)));
        }
    }
    Ok(MixedBatch {
        features: out_x,
        targets: out_y,
        partners,
        lambdas,
    })
}

/// A masked span of time steps `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSpan {
    pub start: usize,
    pub width: usize,
}

/// Draws `n_masks` spans with widths uniform in `[0, floor(max_ratio·T)]`.
pub fn draw_time_masks<R: Rng + ?Sized>(
    n_frames: usize,
    max_ratio: f64,
    n_masks: usize,
    rng: &mut R,
) -> Result<Vec<MaskSpan>> {
    if !(0.0..=1.0).contains(&max_ratio) {
        return Err(invalid("dropstep ratio must lie in [0, 1]"));
    }
    let max_width = libm::floor(max_ratio * n_frames as f64) as usize;
    Ok((0..n_masks)
        .map(|_| {
            let width = rng.random_range(0..=max_width);
            let start = rng.random_range(0..=n_frames - width);
            MaskSpan { start, width }
        })
        .collect())
}

/// Zeroes the given time spans of `[F × T]` features.
pub fn apply_time_masks(features: ArrayView2<'_, f64>, spans: &[MaskSpan]) -> Array2<f64> {
    let mut out = features.to_owned();
    let t = out.ncols();
    for span in spans {
        let end = (span.start + span.width).min(t);
        if span.start < end {
            out.slice_mut(ndarray::s![.., span.start..end]).fill(0.0);
        }
    }
    out
}

/// Dropstep on `[F × T]` features.
pub fn time_mask<R: Rng + ?Sized>(
    features: ArrayView2<'_, f64>,
    max_ratio: f64,
    n_masks: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Vec<MaskSpan>)> {
    let spans = draw_time_masks(features.ncols(), max_ratio, n_masks, rng)?;
    Ok((apply_time_masks(features, &spans), spans))
}

/// Applies dropstep to CNN features and external embeddings with two
/// independent generators derived from `seed`.
pub fn dropstep_pair<R: Rng + SeedableRng>(
    cnn: ArrayView2<'_, f64>,
    embeddings: ArrayView2<'_, f64>,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut cnn_rng = R::seed_from_u64(seed);
    let mut emb_rng = R::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (a, _) = time_mask(cnn, cfg.dropstep_ratio, cfg.dropstep_count, &mut cnn_rng)?;
    let (b, _) = time_mask(embeddings, cfg.dropstep_ratio, cfg.dropstep_count, &mut emb_rng)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Dataset;
    use alloc::vec;
    use alloc::format;
    use ndarray::{array, Array};
    use rand_chacha::ChaCha8Rng;

    fn meta(i: usize, ds: Dataset) -> ClipMetadata {
        ClipMetadata::new(format!("c{i}"), ds, 10.0).unwrap()
    }

    #[test]
    fn mixup_examples() {
        let x1 = array![[1.0, 2.0]];
        let x2 = array![[3.0, 6.0]];
        let (x, y) = mixup(x1.view(), x2.view(), &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(x, x1);
        assert_eq!(y, vec![1.0, 0.0]);
        let (_, y) = mixup(x1.view(), x2.view(), &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
        let (x, _) = mixup(x1.view(), x1.view(), &[0.2], &[0.2], 0.37).unwrap();
        assert!(x.iter().zip(x1.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(mixup(x1.view(), array![[1.0]].view(), &[], &[], 0.5).is_err());
    }

    #[test]
    fn singleton_families_are_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array::from_shape_fn((2, 3, 4), |_| rng.random_range(0.0..1.0));
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let metas = [meta(0, Dataset::DesedStrong), meta(1, Dataset::Maestro)];
        let out = mixup_within_dataset(x.view(), y.view(), &metas, 0.5, &mut rng).unwrap();
        assert_eq!(out.features, x);
        assert_eq!(out.targets, y);
        assert_eq!(out.partners, vec![0, 1]);
    }

    #[test]
    fn single_family_mixes_whole_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Array::from_shape_fn((6, 2, 3), |_| rng.random_range(0.0..1.0));
        let y = Array::from_shape_fn((6, 2), |_| rng.random_range(0.0..1.0));
        let metas: Vec<_> = (0..6).map(|i| meta(i, Dataset::DesedWeak)).collect();
        let out = mixup_within_dataset(x.view(), y.view(), &metas, 0.5, &mut rng).unwrap();
        let mut sorted = out.partners.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert_eq!(out.lambdas.len(), 1);
        assert!(out.targets.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn time_mask_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array::from_shape_fn((4, 20), |(f, t)| 1.0 + (f * 20 + t) as f64);
        let (out, spans) = time_mask(x.view(), 0.0, 3, &mut rng).unwrap();
        assert_eq!(out, x);
        assert!(spans.iter().all(|s| s.width == 0));

        let full = apply_time_masks(x.view(), &[MaskSpan { start: 0, width: 20 }]);
        assert!(full.iter().all(|v| *v == 0.0));

        let (out, spans) = time_mask(x.view(), 0.5, 1, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let zero_cols = (0..20).filter(|&t| out.column(t).iter().all(|v| *v == 0.0)).count();
        assert_eq!(zero_cols, spans[0].width);
        assert!(spans[0].width <= 10);

        let (again, _) = time_mask(x.view(), 0.5, 1, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn dropstep_streams_are_independent() {
        let a = Array::from_elem((2, 50), 1.0);
        let cfg = AugmentConfig { dropstep_ratio: 0.5, ..Default::default() };
        let (c, e) = dropstep_pair::<ChaCha8Rng>(a.view(), a.view(), &cfg, 123).unwrap();
        assert_ne!(c, e);
    }
}
