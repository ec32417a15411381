//! Frequency-dynamic convolution (forward only) and the block pieces around
//! it: gated linear unit and inference-time batch normalization.
//!
//! Feature maps are `[channels × freq × time]`; kernels are
//! `[out × in × k_freq × k_time]` with odd spatial sizes and zero "same"
//! padding.

use alloc::vec::Vec;

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayView4, Axis};

use crate::error::{invalid, shape, Result};
use crate::math::sigmoid;

pub const DEFAULT_BASIS: usize = 4;
pub const DEFAULT_TEMPERATURE: f64 = 31.0;

/// Produces per-frequency logits over the basis kernels from the pooled
/// frequency profile of the input: a 1-D convolution along frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    /// `[K × width]`, `width` odd.
    pub weights: Array2<f64>,
    /// `[K]`
    pub bias: Vec<f64>,
}

impl AttentionNet {
    pub fn n_basis(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdyParams {
    /// K kernels, each `[out × in × k_freq × k_time]`.
    pub basis: Vec<Array4<f64>>,
    pub attention: AttentionNet,
    pub temperature: f64,
}

impl FdyParams {
    pub fn validate(&self) -> Result<()> {
        let first = self.basis.first().ok_or_else(|| invalid("at least one basis kernel is required"))?;
        let dim = first.dim();
        if dim.2 % 2 == 0 || dim.3 % 2 == 0 {
            return Err(shape("kernel sizes must be odd"));
        }
        if self.basis.iter().any(|k| k.dim() != dim) {
            return Err(shape("basis kernels differ in shape"));
        }
        if self.attention.n_basis() != self.basis.len() || self.attention.bias.len() != self.basis.len() {
            return Err(shape("attention network does not match the number of basis kernels"));
        }
        if self.attention.weights.ncols() % 2 == 0 {
            return Err(shape("attention kernel width must be odd"));
        }
        if !(self.temperature > 0.0) {
            return Err(invalid("temperature must be positive"));
        }
        Ok(())
    }

    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }
}

fn check_kernel(input: &ArrayView3<'_, f64>, kernel_dim: (usize, usize, usize, usize)) -> Result<()> {
    let (_, c_in, kf, kt) = kernel_dim;
    if input.dim().0 != c_in {
        return Err(shape(alloc::format!(
            "input has {} channels, kernel expects {c_in}",
            input.dim().0
        )));
    }
    if kf % 2 == 0 || kt % 2 == 0 {
        return Err(shape("kernel sizes must be odd"));
    }
    Ok(())
}

/// Direct cross-correlation with zero same-padding.
pub fn conv2d_naive(input: ArrayView3<'_, f64>, kernel: ArrayView4<'_, f64>) -> Result<Array3<f64>> {
    check_kernel(&input, kernel.dim())?;
    let (c_out, c_in, kf, kt) = kernel.dim();
    let (_, f, t) = input.dim();
    let (hf, ht) = ((kf / 2) as isize, (kt / 2) as isize);
    let mut out = Array3::zeros((c_out, f, t));
    for o in 0..c_out {
        for y in 0..f {
            for x in 0..t {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for i in 0..kf {
                        let yy = y as isize + i as isize - hf;
                        if yy < 0 || yy >= f as isize {
                            continue;
                        }
                        for j in 0..kt {
                            let xx = x as isize + j as isize - ht;
                            if xx < 0 || xx >= t as isize {
                                continue;
                            }
                            acc += kernel[[o, c, i, j]] * input[[c, yy as usize, xx as usize]];
                        }
                    }
                }
                out[[o, y, x]] = acc;
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax of `logits / temperature`.
pub fn softmax_rows(logits: ArrayView2<'_, f64>, temperature: f64) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| libm::exp((v - max) / temperature));
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Attention logits `[F × K]` before the temperature softmax.
pub fn attention_logits(input: ArrayView3<'_, f64>, net: &AttentionNet) -> Array2<f64> {
    let (_, f, _) = input.dim();
    // average over channels and time
    let profile: Vec<f64> = (0..f)
        .map(|y| input.index_axis(Axis(1), y).mean().unwrap_or(0.0))
        .collect();
    let k = net.n_basis();
    let width = net.weights.ncols();
    let half = (width / 2) as isize;
    let mut logits = Array2::zeros((f, k));
    for y in 0..f {
        for b in 0..k {
            let mut acc = net.bias[b];
            for j in 0..width {
                let yy = y as isize + j as isize - half;
                if (0..f as isize).contains(&yy) {
                    acc += net.weights[[b, j]] * profile[yy as usize];
                }
            }
            logits[[y, b]] = acc;
        }
    }
    logits
}

/// Per-frequency mixing weights `[F × K]`; each row is a probability vector.
pub fn freq_attention(input: ArrayView3<'_, f64>, net: &AttentionNet, temperature: f64) -> Result<Array2<f64>> {
    if net.n_basis() == 0 {
        return Err(invalid("at least one basis kernel is required"));
    }
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    Ok(softmax_rows(attention_logits(input, net).view(), temperature))
}

/// Convolution whose kernel at frequency row `f` is `Σ_k attention[f,k]·basis_k`.
pub fn fdy_conv_with_attention(
    input: ArrayView3<'_, f64>,
    basis: &[Array4<f64>],
    attention: ArrayView2<'_, f64>,
) -> Result<Array3<f64>> {
    let first = basis.first().ok_or_else(|| invalid("at least one basis kernel is required"))?;
    let kdim = first.dim();
    check_kernel(&input, kdim)?;
    if basis.iter().any(|k| k.dim() != kdim) {
        return Err(shape("basis kernels differ in shape"));
    }
    let (c_out, c_in, kf, kt) = kdim;
    let (_, f, t) = input.dim();
    if attention.dim() != (f, basis.len()) {
        return Err(shape("attention must be [freq × basis]"));
    }
    let (hf, ht) = ((kf / 2) as isize, (kt / 2) as isize);
    let mut out = Array3::zeros((c_out, f, t));
    let mut fused = Array4::<f64>::zeros(kdim);
    for y in 0..f {
        fused.fill(0.0);
        for (k, kernel) in basis.iter().enumerate() {
            fused.scaled_add(attention[[y, k]], kernel);
        }
        for o in 0..c_out {
            for x in 0..t {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for i in 0..kf {
                        let yy = y as isize + i as isize - hf;
                        if yy < 0 || yy >= f as isize {
                            continue;
                        }
                        for j in 0..kt {
                            let xx = x as isize + j as isize - ht;
                            if xx < 0 || xx >= t as isize {
                                continue;
                            }
                            acc += fused[[o, c, i, j]] * input[[c, yy as usize, xx as usize]];
                        }
                    }
                }
                out[[o, y, x]] = acc;
            }
        }
    }
    Ok(out)
}

/// Frequency-dynamic convolution with input-conditioned attention.
pub fn fdy_conv(input: ArrayView3<'_, f64>, params: &FdyParams) -> Result<Array3<f64>> {
    params.validate()?;
    let attention = freq_attention(input, &params.attention, params.temperature)?;
    fdy_conv_with_attention(input, &params.basis, attention.view())
}

/// Gated linear unit over the channel axis: `a ⊙ σ(b)` for halves `(a, b)`.
pub fn glu(input: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
    let c = input.dim().0;
    if c % 2 != 0 {
        return Err(shape("gated linear unit needs an even channel count"));
    }
    let (a, b) = input.view().split_at(Axis(0), c / 2);
    let mut out = a.to_owned();
    out.zip_mut_with(&b, |a, &b| *a *= sigmoid(b));
    Ok(out)
}

/// `γ·(x − μ)/√(σ² + ε) + β` with per-channel statistics.
pub fn batchnorm_infer(
    input: ArrayView3<'_, f64>,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<Array3<f64>> {
    let c = input.dim().0;
    if [mean.len(), var.len(), gamma.len(), beta.len()].iter().any(|&n| n != c) {
        return Err(shape("batch-norm statistics must have one entry per channel"));
    }
    let mut out = input.to_owned();
    for (ch, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
        let scale = gamma[ch] / libm::sqrt(var[ch] + eps);
        let (mu, b) = (mean[ch], beta[ch]);
        plane.mapv_inplace(|x| scale * (x - mu) + b);
    }
    Ok(out)
}
