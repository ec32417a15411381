//! Frequency-wise MixStyle and residual normalization.
//!
//! Inputs are `[batch × freq × time]` tensors. Statistics are taken over the
//! time axis independently for every instance and frequency bin, so mixing
//! transfers the per-frequency "style" of one clip onto another.

use alloc::vec::Vec;

use ndarray::{Array2, Array3, Array4, ArrayView3, ArrayView4, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{invalid, shape, Result};
use crate::math::mean_std;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-instance, per-frequency statistics over time.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqStats {
    /// `[B × F]`
    pub mean: Array2<f64>,
    /// `[B × F]`, clamped to at least `epsilon`
    pub std: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixStyleConfig {
    /// Shape of the symmetric Beta distribution the mixing weight is drawn from.
    pub alpha: f64,
    pub apply_prob: f64,
    pub epsilon: f64,
    /// Must stay `false`: the transform is a training-time augmentation.
    pub enabled_at_eval: bool,
    pub hook: MixStyleHook,
}

impl Default for MixStyleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            apply_prob: 0.5,
            epsilon: DEFAULT_EPSILON,
            enabled_at_eval: false,
            hook: MixStyleHook::Spectrogram,
        }
    }
}

impl MixStyleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(invalid("mixstyle.alpha must be positive"));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return Err(invalid("mixstyle.apply_prob must lie in [0, 1]"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("mixstyle.epsilon must be positive"));
        }
        if self.enabled_at_eval {
            return Err(invalid("mixstyle.enabled_at_eval must be false"));
        }
        Ok(())
    }
}

/// Where the transform is inserted in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixStyleHook {
    /// On the log-mel input.
    Spectrogram,
    /// On internal CNN feature maps, per channel.
    CnnFeatures,
    Both,
}

impl MixStyleHook {
    pub fn on_spectrogram(self) -> bool {
        matches!(self, MixStyleHook::Spectrogram | MixStyleHook::Both)
    }

    pub fn on_features(self) -> bool {
        matches!(self, MixStyleHook::CnnFeatures | MixStyleHook::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// A sampled mixing: partner permutation and convex weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MixDraw {
    pub perm: Vec<usize>,
    pub lambda: f64,
}

pub fn freq_stats(batch: ArrayView3<'_, f64>, epsilon: f64) -> Result<FreqStats> {
    let (b, f, t) = batch.dim();
    if t < 2 {
        return Err(shape("frequency statistics need at least two time steps"));
    }
    let mut mean = Array2::zeros((b, f));
    let mut std = Array2::zeros((b, f));
    for i in 0..b {
        for k in 0..f {
            let (m, s) = mean_std(batch.slice(ndarray::s![i, k, ..]));
            mean[[i, k]] = m;
            std[[i, k]] = s.max(epsilon);
        }
    }
    Ok(FreqStats { mean, std })
}

pub fn sample_lambda<R: Rng + ?Sized>(cfg: &MixStyleConfig, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(cfg.alpha, cfg.alpha).map_err(|_| invalid("invalid Beta shape"))?;
    Ok(beta.sample(rng))
}

fn check_perm(perm: &[usize], b: usize) -> Result<()> {
    if perm.len() != b {
        return Err(shape(alloc::format!("permutation of length {} for batch of {b}", perm.len())));
    }
    let mut seen = alloc::vec![false; b];
    for &p in perm {
        if p >= b || core::mem::replace(&mut seen[p], true) {
            return Err(invalid("partner list is not a permutation"));
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(alloc::format!("mixing weight {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Mixes each instance's per-frequency statistics with those of its
/// partner `perm[i]`:
/// `out = σ_mix·(x − μ_i)/σ_i + μ_mix` with `μ_mix = λμ_i + (1−λ)μ_j` and
/// `σ_mix = λσ_i + (1−λ)σ_j`.
///
/// Instances mixed with themselves, or with `λ = 1`, are copied unchanged.
pub fn freq_mixstyle(
    batch: ArrayView3<'_, f64>,
    perm: &[usize],
    lambda: f64,
    epsilon: f64,
) -> Result<Array3<f64>> {
    let (b, f, _) = batch.dim();
    check_perm(perm, b)?;
    check_lambda(lambda)?;
    let stats = freq_stats(batch, epsilon)?;
    let mut out = batch.to_owned();
    for (i, &j) in perm.iter().enumerate() {
        if j == i || lambda == 1.0 {
            continue;
        }
        for k in 0..f {
            let (mu, sigma) = (stats.mean[[i, k]], stats.std[[i, k]]);
            let mu_mix = lambda * mu + (1.0 - lambda) * stats.mean[[j, k]];
            let sigma_mix = lambda * sigma + (1.0 - lambda) * stats.std[[j, k]];
            out.slice_mut(ndarray::s![i, k, ..])
                .mapv_inplace(|x| sigma_mix * ((x - mu) / sigma) + mu_mix);
        }
    }
    Ok(out)
}

/// Gradient of `⟨upstream, freq_mixstyle(batch)⟩` with respect to `batch`,
/// with the partner statistics treated as constants.
pub fn freq_mixstyle_input_grad(
    batch: ArrayView3<'_, f64>,
    perm: &[usize],
    lambda: f64,
    epsilon: f64,
    upstream: ArrayView3<'_, f64>,
) -> Result<Array3<f64>> {
    let (b, f, t) = batch.dim();
    if upstream.dim() != batch.dim() {
        return Err(shape("upstream gradient shape differs from input"));
    }
    check_perm(perm, b)?;
    check_lambda(lambda)?;
    if t < 2 {
        return Err(shape("frequency statistics need at least two time steps"));
    }
    let mut grad = upstream.to_owned();
    let tf = t as f64;
    for (i, &j) in perm.iter().enumerate() {
        if j == i || lambda == 1.0 {
            continue;
        }
        for k in 0..f {
            let x = batch.slice(ndarray::s![i, k, ..]);
            let g = upstream.slice(ndarray::s![i, k, ..]);
            let (mu, raw_sigma) = mean_std(x);
            let (_, sigma_j) = mean_std(batch.slice(ndarray::s![j, k, ..]));
            let clamped = raw_sigma < epsilon;
            let sigma = raw_sigma.max(epsilon);
            let sigma_mix = lambda * sigma + (1.0 - lambda) * sigma_j.max(epsilon);

            let g_mean = g.sum() / tf;
            let gx_mean = if clamped {
                0.0
            } else {
                g.iter().zip(x).map(|(g, x)| g * (x - mu) / sigma).sum::<f64>() / tf
            };
            let ratio = sigma_mix / sigma;
            Zip::from(grad.slice_mut(ndarray::s![i, k, ..]))
                .and(g)
                .and(x)
                .for_each(|out, &gs, &xs| {
                    let xhat = (xs - mu) / sigma;
                    *out = ratio * (gs - g_mean - xhat * gx_mean)
                        + lambda * xhat * gx_mean
                        + lambda * g_mean;
                });
        }
    }
    Ok(grad)
}

/// `lambda_rn · x + FIN(x)` where `FIN` standardizes every instance and
/// frequency bin over time.
pub fn residual_norm(batch: ArrayView3<'_, f64>, lambda_rn: f64, epsilon: f64) -> Result<Array3<f64>> {
    if !(lambda_rn >= 0.0) {
        return Err(invalid("residual normalization weight must be non-negative"));
    }
    let stats = freq_stats(batch, epsilon)?;
    let mut out = batch.to_owned();
    for ((i, k, _), v) in out.indexed_iter_mut() {
        let x = *v;
        *v = lambda_rn * x + (x - stats.mean[[i, k]]) / stats.std[[i, k]];
    }
    Ok(out)
}

/// Draws a partner permutation and weight with probability `apply_prob`.
pub fn draw_mix<R: Rng + ?Sized>(batch_size: usize, cfg: &MixStyleConfig, rng: &mut R) -> Result<Option<MixDraw>> {
    cfg.validate()?;
    if batch_size < 2 || !rng.random_bool(cfg.apply_prob) {
        return Ok(None);
    }
    let mut perm: Vec<usize> = (0..batch_size).collect();
    perm.shuffle(rng);
    let lambda = sample_lambda(cfg, rng)?;
    Ok(Some(MixDraw { perm, lambda }))
}

/// Spectrogram-level hook. Evaluation always returns the input unchanged.
pub fn apply_mixstyle<R: Rng + ?Sized>(
    batch: ArrayView3<'_, f64>,
    cfg: &MixStyleConfig,
    phase: Phase,
    rng: &mut R,
) -> Result<(Array3<f64>, Option<MixDraw>)> {
    cfg.validate()?;
    if phase == Phase::Eval || !cfg.hook.on_spectrogram() {
        return Ok((batch.to_owned(), None));
    }
    match draw_mix(batch.dim().0, cfg, rng)? {
        Some(draw) => Ok((freq_mixstyle(batch, &draw.perm, draw.lambda, cfg.epsilon)?, Some(draw))),
        None => Ok((batch.to_owned(), None)),
    }
}

/// Feature-map hook on `[B × C × F × T]`: every channel is mixed on its own
/// with a shared partner permutation and weight.
pub fn freq_mixstyle_channels(
    features: ArrayView4<'_, f64>,
    perm: &[usize],
    lambda: f64,
    epsilon: f64,
) -> Result<Array4<f64>> {
    let mut out = features.to_owned();
    for c in 0..features.dim().1 {
        let mixed = freq_mixstyle(features.index_axis(Axis(1), c), perm, lambda, epsilon)?;
        out.index_axis_mut(Axis(1), c).assign(&mixed);
    }
    Ok(out)
}
