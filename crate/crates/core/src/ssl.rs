//! Losses and mean-teacher machinery for mixed DESED/MAESTRO training.
//!
//! Everything here is a pure function of its inputs. Loss masking follows
//! [`ClassVocabulary::class_mask`]: a class outside the mask never touches
//! the numerator or the denominator of any term, so perturbing its
//! prediction leaves the loss bit-identical.

use alloc::string::String;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, shape, Result};
use crate::math::sigmoid;
use crate::types::{ClassVocabulary, ClipMetadata, Dataset, MaskMode, Origin};

/// Predictions are clamped to `[PRED_CLAMP, 1 − PRED_CLAMP]` before `ln`.
pub const PRED_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub ema: f64,
    pub warmup_epochs: f64,
    pub ssl_max: f64,
    pub loss_mode: MaskMode,
    pub weak_uses_attention_pool: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 60,
            ema: 0.999,
            warmup_epochs: 50.0,
            ssl_max: 2.0,
            loss_mode: MaskMode::Independent,
            weak_uses_attention_pool: true,
        }
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
    -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
}

/// Mean BCE over frames and unmasked classes of `[T × C]` inputs. Zero when
/// every class is masked.
pub fn masked_bce(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, mask: &[bool]) -> Result<f64> {
    if pred.dim() != target.dim() || pred.ncols() != mask.len() {
        return Err(shape("prediction, target and mask disagree in shape"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p_row, y_row) in pred.rows().into_iter().zip(target.rows()) {
        for c in (0..mask.len()).filter(|&c| mask[c]) {
            sum += bce(p_row[c], y_row[c]);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean squared student/teacher difference over unmasked cells.
pub fn consistency_mse(student: ArrayView2<'_, f64>, teacher: ArrayView2<'_, f64>, mask: &[bool]) -> Result<f64> {
    if student.dim() != teacher.dim() || student.ncols() != mask.len() {
        return Err(shape("student, teacher and mask disagree in shape"));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s_row, t_row) in student.rows().into_iter().zip(teacher.rows()) {
        for c in (0..mask.len()).filter(|&c| mask[c]) {
            let d = s_row[c] - t_row[c];
            sum += d * d;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Clip-level probabilities from frame logits `[T × C]`.
///
/// Attention logits go through a softmax over the class axis in which
/// masked classes are set to −∞; the resulting per-frame weights are
/// normalized over time and used to average the frame probabilities.
/// Masked classes get probability 0.
pub fn attention_pool(
    frame_logits: ArrayView2<'_, f64>,
    attn_logits: ArrayView2<'_, f64>,
    mask: &[bool],
) -> Result<Vec<f64>> {
    if frame_logits.dim() != attn_logits.dim() || frame_logits.ncols() != mask.len() {
        return Err(shape("frame logits, attention logits and mask disagree in shape"));
    }
    if frame_logits.nrows() == 0 {
        return Err(shape("attention pooling needs at least one frame"));
    }
    let weights = class_softmax(attn_logits, mask);
    let mut out = alloc::vec![0.0; mask.len()];
    for c in (0..mask.len()).filter(|&c| mask[c]) {
        let col = weights.column(c);
        let norm = col.sum();
        if norm > 0.0 {
            let num: f64 = col
                .iter()
                .zip(frame_logits.column(c))
                .map(|(w, l)| w * sigmoid(*l))
                .sum();
            out[c] = (num / norm).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Softmax over classes per frame with masked entries at −∞.
pub fn class_softmax(attn_logits: ArrayView2<'_, f64>, mask: &[bool]) -> Array2<f64> {
    let mut out = Array2::zeros(attn_logits.dim());
    for (row, mut dst) in attn_logits.rows().into_iter().zip(out.rows_mut()) {
        let max = (0..mask.len())
            .filter(|&c| mask[c])
            .map(|c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for c in (0..mask.len()).filter(|&c| mask[c]) {
            let e = libm::exp(row[c] - max);
            dst[c] = e;
            sum += e;
        }
        dst.mapv_inplace(|v| v / sum);
    }
    out
}

/// `t' = decay·t + (1 − decay)·s`, element-wise.
pub fn ema_update(student: &[f64], teacher: &[f64], decay: f64) -> Result<Vec<f64>> {
    if student.len() != teacher.len() {
        return Err(shape("student and teacher parameter vectors differ in length"));
    }
    if !(0.0..=1.0).contains(&decay) {
        return Err(invalid("EMA decay must lie in [0, 1]"));
    }
    Ok(student
        .iter()
        .zip(teacher)
        .map(|(s, t)| decay * t + (1.0 - decay) * s)
        .collect())
}

/// Sigmoid-shaped ramp `max_w · exp(−5(1 − min(1, epoch/warmup))²)`.
pub fn ssl_weight(epoch: f64, warmup: f64, max_w: f64) -> f64 {
    if warmup <= 0.0 {
        return max_w;
    }
    let phase = 1.0 - (epoch / warmup).clamp(0.0, 1.0);
    max_w * libm::exp(-5.0 * phase * phase)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub strong_bce: f64,
    pub weak_bce: f64,
    pub soft_bce: f64,
    pub consistency_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub strong_bce: f64,
    pub weak_bce: f64,
    pub soft_bce: f64,
    pub consistency_mse: f64,
    pub ssl_weight: f64,
    pub total: f64,
}

pub fn total_loss(parts: LossParts, epoch: f64, cfg: &TrainConfig) -> LossBreakdown {
    let w = ssl_weight(epoch, cfg.warmup_epochs, cfg.ssl_max);
    LossBreakdown {
        strong_bce: parts.strong_bce,
        weak_bce: parts.weak_bce,
        soft_bce: parts.soft_bce,
        consistency_mse: parts.consistency_mse,
        ssl_weight: w,
        total: parts.strong_bce + parts.weak_bce + parts.soft_bce + w * parts.consistency_mse,
    }
}

/// Network outputs for one clip, as logits `[T × C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipOutputs {
    pub frame_logits: Array2<f64>,
    pub attn_logits: Array2<f64>,
}

impl ClipOutputs {
    pub fn frame_probs(&self) -> Array2<f64> {
        self.frame_logits.mapv(sigmoid)
    }

    fn clip_probs(&self, mask: &[bool], attention: bool) -> Result<Vec<f64>> {
        if attention {
            attention_pool(self.frame_logits.view(), self.attn_logits.view(), mask)
        } else {
            let probs = self.frame_probs();
            Ok(probs
                .axis_iter(Axis(1))
                .enumerate()
                .map(|(c, col)| if mask[c] { col.fold(0.0, |m, v| f64::max(m, *v)) } else { 0.0 })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClipLabels {
    /// Frame-level hard labels `[T × C]`.
    Strong(Array2<f64>),
    /// Clip-level tags `[C]`.
    Weak(Vec<f64>),
    /// Frame-level soft labels `[T × C]`.
    Soft(Array2<f64>),
    Unlabeled,
}

/// Sets each DESED super-class target of a MAESTRO clip to the max of its
/// mapped MAESTRO targets (baseline mode only).
pub fn expand_targets(
    target: ArrayView2<'_, f64>,
    dataset: Dataset,
    vocab: &ClassVocabulary,
    mode: MaskMode,
) -> Array2<f64> {
    let mut out = target.to_owned();
    if mode == MaskMode::Baseline && dataset.family() == Origin::Maestro {
        for (&sup, subs) in vocab.cross_map() {
            for t in 0..out.nrows() {
                out[[t, sup]] = subs.iter().map(|&s| target[[t, s]]).fold(0.0, f64::max);
            }
        }
    }
    out
}

/// Loss terms contributed by one clip.
pub fn clip_loss(
    student: &ClipOutputs,
    teacher: Option<&ClipOutputs>,
    labels: &ClipLabels,
    meta: &ClipMetadata,
    vocab: &ClassVocabulary,
    cfg: &TrainConfig,
) -> Result<LossParts> {
    let mask = vocab.class_mask(meta.dataset, cfg.loss_mode);
    if student.frame_logits.ncols() != vocab.len() {
        return Err(shape("outputs do not match the vocabulary size"));
    }
    let probs = student.frame_probs();
    let mut parts = LossParts::default();
    match labels {
        ClipLabels::Strong(y) => parts.strong_bce = masked_bce(probs.view(), y.view(), &mask)?,
        ClipLabels::Soft(y) => {
            let y = expand_targets(y.view(), meta.dataset, vocab, cfg.loss_mode);
            parts.soft_bce = masked_bce(probs.view(), y.view(), &mask)?;
        }
        ClipLabels::Weak(y) => {
            let clip = student.clip_probs(&mask, cfg.weak_uses_attention_pool)?;
            let p = Array2::from_shape_vec((1, clip.len()), clip).map_err(|_| shape("clip probabilities"))?;
            let y = ndarray::ArrayView2::from_shape((1, y.len()), y).map_err(|_| shape("weak labels"))?;
            parts.weak_bce = masked_bce(p.view(), y, &mask)?;
        }
        ClipLabels::Unlabeled => {}
    }
    if let Some(teacher) = teacher {
        if matches!(meta.dataset, Dataset::DesedWeak | Dataset::DesedUnlabeled) {
            let t_probs = teacher.frame_probs();
            let strong = consistency_mse(probs.view(), t_probs.view(), &mask)?;
            let s_clip = student.clip_probs(&mask, cfg.weak_uses_attention_pool)?;
            let t_clip = teacher.clip_probs(&mask, cfg.weak_uses_attention_pool)?;
            let s_clip = ndarray::ArrayView2::from_shape((1, s_clip.len()), &s_clip).map_err(|_| shape("clip"))?;
            let t_clip = ndarray::ArrayView2::from_shape((1, t_clip.len()), &t_clip).map_err(|_| shape("clip"))?;
            parts.consistency_mse = strong + consistency_mse(s_clip, t_clip, &mask)?;
        }
    }
    Ok(parts)
}

/// One clip's contribution to a batch loss.
#[derive(Debug, Clone)]
pub struct ClipLossInput<'a> {
    pub student: &'a ClipOutputs,
    pub teacher: Option<&'a ClipOutputs>,
    pub labels: &'a ClipLabels,
    pub meta: &'a ClipMetadata,
}

/// Averages each loss term over the clips that carry it, then combines
/// the terms with the warm-up weight for `epoch`.
pub fn batch_loss(
    clips: &[ClipLossInput<'_>],
    vocab: &ClassVocabulary,
    epoch: f64,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for clip in clips {
        let p = clip_loss(clip.student, clip.teacher, clip.labels, clip.meta, vocab, cfg)?;
        let slot = match clip.labels {
            ClipLabels::Strong(_) => Some(0),
            ClipLabels::Weak(_) => Some(1),
            ClipLabels::Soft(_) => Some(2),
            ClipLabels::Unlabeled => None,
        };
        if let Some(slot) = slot {
            sums[slot] += [p.strong_bce, p.weak_bce, p.soft_bce][slot];
            counts[slot] += 1;
        }
        if clip.teacher.is_some() && matches!(clip.meta.dataset, Dataset::DesedWeak | Dataset::DesedUnlabeled) {
            sums[3] += p.consistency_mse;
            counts[3] += 1;
        }
    }
    let avg = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 };
    Ok(total_loss(
        LossParts {
            strong_bce: avg(0),
            weak_bce: avg(1),
            soft_bce: avg(2),
            consistency_mse: avg(3),
        },
        epoch,
        cfg,
    ))
}

/// Training subsets a batch is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pool {
    Maestro,
    Synth,
    SynthStrong,
    Weak,
    Unlabeled,
}

impl Pool {
    pub const ALL: [Pool; 5] = [Pool::Maestro, Pool::Synth, Pool::SynthStrong, Pool::Weak, Pool::Unlabeled];

    /// Share of the batch in tenths.
    fn tenths(self) -> usize {
        match self {
            Pool::Maestro | Pool::Weak => 2,
            Pool::Synth | Pool::SynthStrong => 1,
            Pool::Unlabeled => 4,
        }
    }
}

/// Clips per subset in one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchPlan {
    pub maestro: usize,
    pub synth: usize,
    pub synth_strong: usize,
    pub weak: usize,
    pub unlabeled: usize,
}

impl BatchPlan {
    /// Splits `batch_size` 1/5 : 1/10 : 1/10 : 1/5 : 2/5, rounding with the
    /// largest-remainder rule so the counts always sum to `batch_size`.
    pub fn for_batch_size(batch_size: usize) -> Self {
        let mut counts = [0usize; 5];
        let mut rem = [(0usize, 0usize); 5];
        for (i, pool) in Pool::ALL.iter().enumerate() {
            let scaled = batch_size * pool.tenths();
            counts[i] = scaled / 10;
            rem[i] = (scaled % 10, i);
        }
        let missing = batch_size - counts.iter().sum::<usize>();
        rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rem.iter().take(missing) {
            counts[i] += 1;
        }
        Self {
            maestro: counts[0],
            synth: counts[1],
            synth_strong: counts[2],
            weak: counts[3],
            unlabeled: counts[4],
        }
    }

    pub fn count(&self, pool: Pool) -> usize {
        match pool {
            Pool::Maestro => self.maestro,
            Pool::Synth => self.synth,
            Pool::SynthStrong => self.synth_strong,
            Pool::Weak => self.weak,
            Pool::Unlabeled => self.unlabeled,
        }
    }

    pub fn total(&self) -> usize {
        Pool::ALL.iter().map(|p| self.count(*p)).sum()
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize, usize) {
        (self.maestro, self.synth, self.synth_strong, self.weak, self.unlabeled)
    }
}

#[derive(Debug, Clone)]
struct PoolCursor {
    ids: Vec<String>,
    order: Vec<usize>,
    next: usize,
}

/// Draws batches without replacement within each subset; a subset is
/// reshuffled when it runs out.
#[derive(Debug, Clone)]
pub struct BatchComposer {
    plan: BatchPlan,
    pools: Vec<PoolCursor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub plan: BatchPlan,
    pub ids: Vec<(Pool, String)>,
}

impl BatchComposer {
    /// `pools` is indexed like [`Pool::ALL`].
    pub fn new(pools: [Vec<String>; 5], batch_size: usize) -> Result<Self> {
        if pools.iter().any(Vec::is_empty) {
            return Err(invalid("every training subset needs at least one clip"));
        }
        Ok(Self {
            plan: BatchPlan::for_batch_size(batch_size),
            pools: pools
                .into_iter()
                .map(|ids| PoolCursor {
                    order: Vec::new(),
                    next: 0,
                    ids,
                })
                .collect(),
        })
    }

    pub fn plan(&self) -> BatchPlan {
        self.plan
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SampledBatch {
        let mut ids = Vec::with_capacity(self.plan.total());
        for (pool, cursor) in Pool::ALL.iter().zip(self.pools.iter_mut()) {
            for _ in 0..self.plan.count(*pool) {
                if cursor.next >= cursor.order.len() {
                    cursor.order = (0..cursor.ids.len()).collect();
                    cursor.order.shuffle(rng);
                    cursor.next = 0;
                }
                ids.push((*pool, cursor.ids[cursor.order[cursor.next]].clone()));
                cursor.next += 1;
            }
        }
        SampledBatch { plan: self.plan, ids }
    }
}

/// One-shot helper: plan plus a single sampled batch.
pub fn compose_batch<R: Rng + ?Sized>(pools: [Vec<String>; 5], batch_size: usize, rng: &mut R) -> Result<SampledBatch> {
    Ok(BatchComposer::new(pools, batch_size)?.next_batch(rng))
}
