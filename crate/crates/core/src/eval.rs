//! Intersection-based PSDS, segment-based mPAUC and the joint score.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, shape, Error, Result};
use crate::math::mean_std;
use crate::types::{Event, EventList, Posteriorgram};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdsConfig {
    pub rho_dtc: f64,
    pub rho_gtc: f64,
    pub rho_cttc: f64,
    pub alpha_ct: f64,
    pub alpha_st: f64,
    /// Upper integration limit in false positives per hour.
    pub e_max: f64,
}

impl Default for PsdsConfig {
    fn default() -> Self {
        Self {
            rho_dtc: 0.7,
            rho_gtc: 0.7,
            rho_cttc: 0.3,
            alpha_ct: 0.0,
            alpha_st: 1.0,
            e_max: 100.0,
        }
    }
}

impl PsdsConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.rho_dtc) && unit(self.rho_gtc) && unit(self.rho_cttc)) {
            return Err(invalid("intersection criteria must lie in [0, 1]"));
        }
        if !(self.alpha_ct >= 0.0 && self.alpha_st >= 0.0) {
            return Err(invalid("alpha weights must be non-negative"));
        }
        if !(self.e_max > 0.0 && self.e_max.is_finite()) {
            return Err(invalid("e_max must be positive"));
        }
        Ok(())
    }
}

/// Length of `[lo, hi)` covered by the union of `intervals`.
pub fn covered_length(lo: f64, hi: f64, intervals: &[(f64, f64)]) -> f64 {
    let mut clipped: Vec<(f64, f64)> = intervals
        .iter()
        .map(|&(a, b)| (a.max(lo), b.min(hi)))
        .filter(|(a, b)| b > a)
        .collect();
    clipped.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in clipped {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total
}

type Index<'a> = BTreeMap<(&'a str, usize), Vec<(f64, f64)>>;

fn index_events<'a, I: IntoIterator<Item = &'a Event>>(events: I) -> Index<'a> {
    let mut idx: Index<'a> = BTreeMap::new();
    for e in events {
        idx.entry((e.clip_id.as_str(), e.class_idx)).or_default().push((e.onset, e.offset));
    }
    idx
}

/// Counts for one class at one operating point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    /// Cross-trigger counts against every other class (zero on the diagonal).
    pub ct: Vec<usize>,
}

/// Per-class matching result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchCounts {
    pub per_class: Vec<ClassCounts>,
    pub n_refs: Vec<usize>,
}

fn ratio(covered: f64, len: f64) -> f64 {
    if len > 0.0 {
        covered / len
    } else {
        0.0
    }
}

fn match_class(dets: &[&Event], refs: &Index<'_>, class_idx: usize, n_classes: usize, cfg: &PsdsConfig) -> ClassCounts {
    let mut fp = 0;
    let mut ct = vec![0; n_classes];
    let mut passing: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for d in dets {
        let own = refs.get(&(d.clip_id.as_str(), class_idx)).map_or(&[][..], Vec::as_slice);
        let len = d.offset - d.onset;
        if ratio(covered_length(d.onset, d.offset, own), len) >= cfg.rho_dtc {
            passing.entry(d.clip_id.as_str()).or_default().push((d.onset, d.offset));
            continue;
        }
        fp += 1;
        if cfg.alpha_ct > 0.0 {
            for (other, slot) in ct.iter_mut().enumerate() {
                if other == class_idx {
                    continue;
                }
                if let Some(r) = refs.get(&(d.clip_id.as_str(), other)) {
                    if ratio(covered_length(d.onset, d.offset, r), len) >= cfg.rho_cttc {
                        *slot += 1;
                    }
                }
            }
        }
    }
    let mut tp = 0;
    for ((clip, _), intervals) in refs.iter().filter(|((_, c), _)| *c == class_idx) {
        let Some(p) = passing.get(clip) else { continue };
        tp += intervals
            .iter()
            .filter(|&&(a, b)| ratio(covered_length(a, b, p), b - a) >= cfg.rho_gtc)
            .count();
    }
    ClassCounts { tp, fp, ct }
}

fn count_refs(refs: &[Event], n_classes: usize) -> Vec<usize> {
    let mut n = vec![0; n_classes];
    for r in refs {
        if r.class_idx < n_classes {
            n[r.class_idx] += 1;
        }
    }
    n
}

/// Intersection-based matching of a single set of detections.
pub fn intersection_match(dets: &EventList, refs: &EventList, n_classes: usize, cfg: &PsdsConfig) -> MatchCounts {
    let ref_idx = index_events(refs);
    let per_class = (0..n_classes)
        .map(|c| {
            let d: Vec<&Event> = dets.iter().filter(|e| e.class_idx == c).collect();
            match_class(&d, &ref_idx, c, n_classes, cfg)
        })
        .collect();
    MatchCounts {
        per_class,
        n_refs: count_refs(refs.as_slice(), n_classes),
    }
}

fn effective_fpr(counts: &ClassCounts, class_idx: usize, hours: f64, cfg: &PsdsConfig) -> f64 {
    let fpr = counts.fp as f64 / hours;
    if cfg.alpha_ct > 0.0 && counts.ct.len() > 1 {
        let others = counts.ct.len() - 1;
        let ct_sum: usize = counts.ct.iter().enumerate().filter(|(c, _)| *c != class_idx).map(|(_, v)| v).sum();
        fpr + cfg.alpha_ct * ct_sum as f64 / hours / others as f64
    } else {
        fpr
    }
}

/// One operating point of the combined curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub efpr: f64,
    pub tpr_per_class: Vec<f64>,
    pub tpr_mean: f64,
    pub tpr_std: f64,
}

/// Per-class ROCs combined on the union of their eFPR values.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPointCurve {
    /// Classes that contribute to the curve, in order of `tpr_per_class`.
    pub classes: Vec<usize>,
    /// Classes dropped because they have no references.
    pub excluded: Vec<usize>,
    pub points: Vec<RocPoint>,
}

/// Combines raw per-class `(efpr, tpr)` points. Each class curve is turned
/// into its upper envelope: at eFPR `e` the class TPR is the best TPR of
/// any operating point with eFPR ≤ `e`.
pub fn combine_class_rocs(classes: Vec<usize>, excluded: Vec<usize>, rocs: &[Vec<(f64, f64)>]) -> OperatingPointCurve {
    let mut sorted: Vec<Vec<(f64, f64)>> = rocs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.push((0.0, 0.0));
            r.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            r
        })
        .collect();
    for r in &mut sorted {
        let mut best = 0.0f64;
        for p in r.iter_mut() {
            best = best.max(p.1);
            p.1 = best;
        }
    }
    let mut grid: Vec<f64> = sorted.iter().flatten().map(|p| p.0).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut cursors = vec![0usize; sorted.len()];
    let points = grid
        .into_iter()
        .map(|e| {
            let tprs: Vec<f64> = sorted
                .iter()
                .zip(cursors.iter_mut())
                .map(|(r, k)| {
                    while *k + 1 < r.len() && r[*k + 1].0 <= e {
                        *k += 1;
                    }
                    r[*k].1
                })
                .collect();
            let (m, s) = mean_std(tprs.iter());
            RocPoint {
                efpr: e,
                tpr_per_class: tprs,
                tpr_mean: m,
                tpr_std: s,
            }
        })
        .collect();
    OperatingPointCurve { classes, excluded, points }
}

fn check_hours(hours: f64) -> Result<()> {
    if !(hours > 0.0 && hours.is_finite()) {
        return Err(invalid("total duration must be positive"));
    }
    Ok(())
}

fn split_classes(n_refs: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let (classes, excluded): (Vec<usize>, Vec<usize>) = (0..n_refs.len()).partition(|&c| n_refs[c] > 0);
    if classes.is_empty() {
        return Err(Error::Empty("no class has reference events".into()));
    }
    Ok((classes, excluded))
}

/// Curve from an explicit list of operating points (one detection set each).
pub fn roc_from_operating_points(
    ops: &[EventList],
    refs: &EventList,
    n_classes: usize,
    duration_hours: f64,
    cfg: &PsdsConfig,
) -> Result<OperatingPointCurve> {
    cfg.validate()?;
    check_hours(duration_hours)?;
    let n_refs = count_refs(refs.as_slice(), n_classes);
    let (classes, excluded) = split_classes(&n_refs)?;
    let mut rocs = vec![Vec::new(); classes.len()];
    for op in ops {
        let m = intersection_match(op, refs, n_classes, cfg);
        for (slot, &c) in classes.iter().enumerate() {
            let k = &m.per_class[c];
            rocs[slot].push((effective_fpr(k, c, duration_hours, cfg), k.tp as f64 / n_refs[c] as f64));
        }
    }
    Ok(combine_class_rocs(classes, excluded, &rocs))
}

/// Raw `(efpr, tpr)` points of one class when sweeping a threshold over the
/// distinct confidences of its detections (kept when confidence ≥ threshold).
pub fn class_roc_points(dets: &[&Event], refs: &EventList, class_idx: usize, n_classes: usize, duration_hours: f64, cfg: &PsdsConfig) -> Vec<(f64, f64)> {
    let ref_idx = index_events(refs.iter().filter(|e| e.class_idx == class_idx || cfg.alpha_ct > 0.0));
    let n_ref = refs.iter().filter(|e| e.class_idx == class_idx).count();
    let conf = |e: &Event| e.confidence.unwrap_or(1.0);
    let mut thresholds: Vec<f64> = dets.iter().map(|e| conf(e)).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for tau in thresholds {
        let kept: Vec<&Event> = dets.iter().copied().filter(|e| conf(e) >= tau).collect();
        let k = match_class(&kept, &ref_idx, class_idx, n_classes, cfg);
        let tpr = if n_ref > 0 { k.tp as f64 / n_ref as f64 } else { 0.0 };
        points.push((effective_fpr(&k, class_idx, duration_hours, cfg), tpr));
    }
    points
}

/// Curve from scored detections. Each class is swept independently over
/// its own confidence values; detections without a confidence count as 1.
pub fn roc_from_confidences(dets: &EventList, refs: &EventList, n_classes: usize, duration_hours: f64, cfg: &PsdsConfig) -> Result<OperatingPointCurve> {
    cfg.validate()?;
    check_hours(duration_hours)?;
    let n_refs = count_refs(refs.as_slice(), n_classes);
    let (classes, excluded) = split_classes(&n_refs)?;
    let rocs: Vec<Vec<(f64, f64)>> = classes
        .iter()
        .map(|&c| {
            let d: Vec<&Event> = dets.iter().filter(|e| e.class_idx == c).collect();
            class_roc_points(&d, refs, c, n_classes, duration_hours, cfg)
        })
        .collect();
    Ok(combine_class_rocs(classes, excluded, &rocs))
}

/// Normalized area under the effective TPR curve on `[0, e_max]`, with the
/// curve held constant between operating points.
pub fn psds(curve: &OperatingPointCurve, cfg: &PsdsConfig) -> f64 {
    let etpr = |p: &RocPoint| (p.tpr_mean - cfg.alpha_st * p.tpr_std).max(0.0);
    step_area(curve.points.iter().map(|p| (p.efpr, etpr(p))), cfg.e_max)
}

/// Area of a right-continuous step function given by sorted `(x, y)`
/// breakpoints, integrated on `[0, x_max]` and divided by `x_max`.
pub fn step_area<I: IntoIterator<Item = (f64, f64)>>(points: I, x_max: f64) -> f64 {
    let pts: Vec<(f64, f64)> = points.into_iter().collect();
    let mut area = 0.0;
    for (i, &(x, y)) in pts.iter().enumerate() {
        if x >= x_max {
            break;
        }
        let next = pts.get(i + 1).map_or(x_max, |p| p.0.min(x_max));
        area += (next - x) * y;
    }
    area / x_max
}

/// PSDS of a single class curve (no cross-class statistics), useful as a
/// per-class tuning objective.
pub fn class_psds(points: &[(f64, f64)], e_max: f64) -> f64 {
    let curve = combine_class_rocs(vec![0], Vec::new(), &[points.to_vec()]);
    step_area(curve.points.iter().map(|p| (p.efpr, p.tpr_mean)), e_max)
}

/// Pooling of frame scores inside a segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SegmentPooling {
    #[default]
    Max,
    Mean,
}

fn n_segments(duration: f64, segment: f64) -> usize {
    libm::ceil(duration / segment - 1e-9).max(1.0) as usize
}

/// Soft segment labels `[S × C]`: every segment takes, per class, the
/// largest label value among events overlapping it. Events without a
/// confidence have label value 1.
pub fn segmentize(events: &[Event], clip_id: &str, n_classes: usize, duration: f64, segment: f64) -> Result<Array2<f64>> {
    if !(segment > 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    if !(duration >= segment) {
        return Err(invalid("clip shorter than one segment"));
    }
    let s_count = n_segments(duration, segment);
    let mut labels = Array2::zeros((s_count, n_classes));
    for e in events.iter().filter(|e| e.clip_id == clip_id) {
        if e.class_idx >= n_classes {
            return Err(shape("event class outside the label matrix"));
        }
        let value = e.confidence.unwrap_or(1.0);
        for s in 0..s_count {
            let (lo, hi) = (s as f64 * segment, (s + 1) as f64 * segment);
            if e.onset < hi && e.offset > lo {
                let cell = &mut labels[[s, e.class_idx]];
                *cell = f64::max(*cell, value);
            }
        }
    }
    Ok(labels)
}

/// Hard labels from soft ones: positive when the soft value is at least
/// `threshold`.
pub fn harden(soft: ArrayView2<'_, f64>, threshold: f64) -> Array2<bool> {
    soft.map(|&v| v >= threshold)
}

/// Segment-level scores `[S × C]` from a posteriorgram. Every frame
/// contributes to each segment its span overlaps.
pub fn segment_scores(post: &Posteriorgram, segment: f64, pooling: SegmentPooling) -> Result<Array2<f64>> {
    if !(segment > 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    let fp = post.frame_period();
    let (t_count, c_count) = (post.n_frames(), post.n_classes());
    let s_count = n_segments(t_count as f64 * fp, segment);
    let scores = post.scores();
    let mut out = Array2::zeros((s_count, c_count));
    for s in 0..s_count {
        let (lo, hi) = (s as f64 * segment, (s + 1) as f64 * segment);
        let first = (libm::floor(lo / fp) as usize).min(t_count - 1);
        let frames: Vec<usize> = (first..t_count)
            .take_while(|&t| (t as f64) * fp < hi)
            .filter(|&t| (t + 1) as f64 * fp > lo)
            .collect();
        for c in 0..c_count {
            let vals = frames.iter().map(|&t| scores[[t, c]]);
            out[[s, c]] = match pooling {
                SegmentPooling::Max => vals.fold(0.0, f64::max),
                SegmentPooling::Mean if frames.is_empty() => 0.0,
                SegmentPooling::Mean => vals.sum::<f64>() / frames.len() as f64,
            };
        }
    }
    Ok(out)
}

/// ROC points `(fpr, tpr)` from a threshold sweep over distinct scores
/// (positive when score ≥ threshold), starting at `(0, 0)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let last_of_tie = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_tie {
            points.push((fp / neg, tp / pos));
        }
    }
    points
}

/// Area under the ROC up to `max_fpr` (trapezoids, linear interpolation at
/// the cut), standardized so that chance gives 0.5 and a perfect ranking 1.
pub fn standardized_pauc(roc: &[(f64, f64)], max_fpr: f64) -> f64 {
    let mut area = 0.0;
    for w in roc.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= max_fpr {
            break;
        }
        if x1 <= max_fpr {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y_cut = y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0);
            area += (max_fpr - x0) * (y0 + y_cut) / 2.0;
        }
    }
    let min_area = max_fpr * max_fpr / 2.0;
    0.5 * (1.0 + (area - min_area) / (max_fpr - min_area))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpaucResult {
    pub value: f64,
    /// Standardized partial AUC per class; `None` for excluded classes.
    pub per_class: Vec<Option<f64>>,
}

impl MpaucResult {
    pub fn excluded(&self) -> Vec<usize> {
        self.per_class.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(c, _)| c).collect()
    }
}

/// Macro-averaged standardized partial AUC over segments `[S × C]`.
/// Classes without both positive and negative segments are excluded.
pub fn mpauc(scores: ArrayView2<'_, f64>, labels: ArrayView2<'_, bool>, max_fpr: f64) -> Result<MpaucResult> {
    if scores.dim() != labels.dim() {
        return Err(shape("scores and labels differ in shape"));
    }
    if !(max_fpr > 0.0 && max_fpr <= 1.0) {
        return Err(invalid("max_fpr must lie in (0, 1]"));
    }
    let per_class: Vec<Option<f64>> = (0..scores.ncols())
        .map(|c| {
            let s: Vec<f64> = scores.column(c).to_vec();
            let l: Vec<bool> = labels.column(c).to_vec();
            let pos = l.iter().filter(|&&v| v).count();
            if pos == 0 || pos == l.len() {
                return None;
            }
            Some(standardized_pauc(&roc_curve(&s, &l), max_fpr))
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    if included.is_empty() {
        return Err(Error::Empty("every class lacks positive or negative segments".into()));
    }
    Ok(MpaucResult {
        value: included.iter().sum::<f64>() / included.len() as f64,
        per_class,
    })
}

/// The ranking score: PSDS plus mPAUC.
pub fn joint_score(psds_value: f64, mpauc_value: f64) -> f64 {
    psds_value + mpauc_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::canonicalize_events;
    use ndarray::array;

    fn ev(clip: &str, c: usize, on: f64, off: f64) -> Event {
        Event::new(clip, c, on, off)
    }

    fn list(v: Vec<Event>) -> EventList {
        canonicalize_events(v).unwrap()
    }

    #[test]
    fn match_examples() {
        let cfg = PsdsConfig::default();
        let refs = list(vec![ev("a", 0, 1.0, 3.0)]);
        let m = intersection_match(&list(vec![ev("a", 0, 1.0, 3.0)]), &refs, 1, &PsdsConfig { rho_dtc: 1.0, rho_gtc: 1.0, ..cfg });
        assert_eq!((m.per_class[0].tp, m.per_class[0].fp), (1, 0));
        let m = intersection_match(&list(vec![ev("a", 0, 5.0, 6.0)]), &refs, 1, &cfg);
        assert_eq!((m.per_class[0].tp, m.per_class[0].fp), (0, 1));
        let refs = list(vec![ev("a", 0, 0.0, 7.0)]);
        let m = intersection_match(&list(vec![ev("a", 0, 0.0, 10.0)]), &refs, 1, &cfg);
        assert_eq!((m.per_class[0].tp, m.per_class[0].fp), (1, 0));
    }

    #[test]
    fn union_coverage() {
        assert_eq!(covered_length(0.0, 10.0, &[(1.0, 3.0), (2.0, 4.0), (8.0, 12.0)]), 5.0);
        assert_eq!(covered_length(0.0, 1.0, &[]), 0.0);
        // fragments jointly cover a reference
        let refs = list(vec![ev("a", 0, 0.0, 10.0)]);
        let dets = list(vec![ev("a", 0, 0.0, 4.0), ev("a", 0, 4.5, 10.0)]);
        let m = intersection_match(&dets, &refs, 1, &PsdsConfig::default());
        assert_eq!((m.per_class[0].tp, m.per_class[0].fp), (1, 0));
    }

    #[test]
    fn cross_triggers_only_with_alpha() {
        let refs = list(vec![ev("a", 1, 0.0, 5.0), ev("a", 0, 8.0, 9.0)]);
        let dets = list(vec![ev("a", 0, 0.0, 5.0)]);
        let off = intersection_match(&dets, &refs, 2, &PsdsConfig::default());
        assert_eq!(off.per_class[0].ct, vec![0, 0]);
        let cfg = PsdsConfig { alpha_ct: 1.0, ..Default::default() };
        let on = intersection_match(&dets, &refs, 2, &cfg);
        assert_eq!(on.per_class[0].ct, vec![0, 1]);
        assert_eq!(effective_fpr(&on.per_class[0], 0, 1.0, &cfg), 2.0);
    }

    #[test]
    fn psds_examples() {
        let cfg = PsdsConfig::default();
        let refs = list(vec![ev("a", 0, 1.0, 3.0), ev("b", 1, 2.0, 4.0)]);
        let ideal = list(vec![ev("a", 0, 1.0, 3.0).with_confidence(0.9), ev("b", 1, 2.0, 4.0).with_confidence(0.4)]);
        let curve = roc_from_confidences(&ideal, &refs, 2, 1.0, &cfg).unwrap();
        assert!((psds(&curve, &cfg) - 1.0).abs() < 1e-12);
        let empty = roc_from_confidences(&EventList::new(), &refs, 2, 1.0, &cfg).unwrap();
        assert_eq!(empty.points.len(), 1);
        assert_eq!(empty.points[0].tpr_per_class, vec![0.0, 0.0]);
        assert_eq!(psds(&empty, &cfg), 0.0);
        let half = roc_from_confidences(&list(vec![ev("a", 0, 1.0, 3.0)]), &refs, 2, 1.0, &cfg).unwrap();
        assert_eq!(psds(&half, &cfg), 0.0);
        assert!((psds(&half, &PsdsConfig { alpha_st: 0.0, ..cfg }) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classes_without_refs_are_excluded() {
        let refs = list(vec![ev("a", 0, 1.0, 3.0)]);
        let curve = roc_from_confidences(&EventList::new(), &refs, 3, 1.0, &PsdsConfig::default()).unwrap();
        assert_eq!(curve.classes, vec![0]);
        assert_eq!(curve.excluded, vec![1, 2]);
        assert!(roc_from_confidences(&EventList::new(), &EventList::new(), 2, 1.0, &PsdsConfig::default()).is_err());
    }

    #[test]
    fn fp_shifts_area() {
        // one FP at 1 h costs 1/e_max of the area
        let cfg = PsdsConfig::default();
        let refs = list(vec![ev("a", 0, 1.0, 3.0)]);
        let dets = list(vec![ev("a", 0, 1.0, 3.0).with_confidence(0.5), ev("a", 0, 6.0, 7.0).with_confidence(0.9)]);
        let curve = roc_from_confidences(&dets, &refs, 1, 1.0, &cfg).unwrap();
        assert!((psds(&curve, &cfg) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn segment_examples() {
        let labels = segmentize(&[ev("a", 0, 2.0, 3.0)], "a", 1, 10.0, 1.0).unwrap();
        assert_eq!(labels.nrows(), 10);
        assert_eq!(labels.column(0).iter().filter(|v| **v == 1.0).count(), 1);
        assert_eq!(labels[[2, 0]], 1.0);
        let soft = segmentize(&[ev("a", 0, 0.0, 1.0).with_confidence(0.4)], "a", 1, 10.0, 1.0).unwrap();
        assert!(!harden(soft.view(), 0.5)[[0, 0]]);
        assert!(segmentize(&[], "a", 1, 0.5, 1.0).is_err());

        let p = Posteriorgram::new("a", 0.016, Array2::from_elem((625, 2), 0.3)).unwrap();
        let s = segment_scores(&p, 1.0, SegmentPooling::Max).unwrap();
        assert_eq!(s.dim(), (10, 2));
        assert!(s.iter().all(|v| *v == 0.3));
        let mut spiky = Array2::zeros((625, 1));
        spiky[[200, 0]] = 0.9;
        let s = segment_scores(&Posteriorgram::new("a", 0.016, spiky).unwrap(), 1.0, SegmentPooling::Max).unwrap();
        assert_eq!(s[[3, 0]], 0.9);
        assert_eq!(s.iter().filter(|v| **v > 0.0).count(), 1);
        let p = Posteriorgram::new("a", 0.016, Array2::zeros((618, 1))).unwrap();
        assert_eq!(segment_scores(&p, 1.0, SegmentPooling::Max).unwrap().nrows(), 10);
    }

    #[test]
    fn mpauc_examples() {
        let labels = array![[true], [false], [true], [false], [false], [true]];
        let perfect = labels.map(|&l| if l { 1.0 } else { 0.0 });
        assert_eq!(mpauc(perfect.view(), labels.view(), 0.1).unwrap().value, 1.0);
        let tied = Array2::from_elem((6, 1), 0.5);
        assert!((mpauc(tied.view(), labels.view(), 0.1).unwrap().value - 0.5).abs() < 1e-12);
        let none = Array2::from_elem((6, 1), false);
        assert!(mpauc(tied.view(), none.view(), 0.1).is_err());
    }

    #[test]
    fn joint_examples() {
        assert!((joint_score(0.529, 0.721) - 1.250).abs() < 1e-9);
        assert!((joint_score(0.656, 0.762) - 1.418).abs() < 1e-9);
        assert_eq!(joint_score(0.0, 0.0), 0.0);
    }
}
