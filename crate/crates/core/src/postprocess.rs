//! Posteriorgram to event conversion.
//!
//! Two families live here. Frame-level decoding (median filter, threshold,
//! merge runs of positive frames) ties an event's extent to the threshold.
//! Change-point sound event bounding boxes (cSEBBs) first segment each class
//! track into boxes with a scalar confidence, so a later threshold on that
//! confidence selects boxes without moving their boundaries.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use ndarray::Array2;

use crate::error::{invalid, shape, Error, Result};
use crate::types::{canonicalize_events, Event, EventList, Posteriorgram};

/// Merged segments whose mean score does not exceed this are dropped.
pub const NOISE_FLOOR: f64 = 0.01;

/// A sound event bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Sebb {
    pub clip_id: String,
    pub class_idx: usize,
    pub onset: f64,
    pub offset: f64,
    pub confidence: f64,
}

impl Sebb {
    pub fn to_event(&self) -> Event {
        Event::new(self.clip_id.clone(), self.class_idx, self.onset, self.offset).with_confidence(self.confidence)
    }
}

/// Change-point detector knobs for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsebbParams {
    /// Moving-average window in frames (odd).
    pub window: usize,
    /// Half-width `s` of the step filter `ȳ[t+s] − ȳ[t−s]`.
    pub step: usize,
    pub rel_merge: f64,
    pub abs_merge: f64,
    /// Minimum step-filter magnitude for a change point.
    pub min_gap: f64,
}

impl Default for CsebbParams {
    fn default() -> Self {
        Self {
            window: 7,
            step: 2,
            rel_merge: 0.2,
            abs_merge: 0.05,
            min_gap: 0.1,
        }
    }
}

impl CsebbParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(invalid("smoothing window must be odd and positive"));
        }
        if self.step == 0 {
            return Err(invalid("step half-width must be at least one frame"));
        }
        if !(self.rel_merge >= 0.0 && self.abs_merge >= 0.0 && self.min_gap >= 0.0) {
            return Err(invalid("merge thresholds and minimum gap must be non-negative"));
        }
        Ok(())
    }

    /// Tie-break order: smaller smoothing window first, then the remaining
    /// fields lexicographically.
    fn tie_cmp(&self, other: &Self) -> Ordering {
        self.window
            .cmp(&other.window)
            .then(self.step.cmp(&other.step))
            .then(self.rel_merge.total_cmp(&other.rel_merge))
            .then(self.abs_merge.total_cmp(&other.abs_merge))
            .then(self.min_gap.total_cmp(&other.min_gap))
    }

    /// The default tuning grid: windows {3, 7, 11, 21} × relative merge
    /// {0.1, 0.2, 0.3} × absolute merge {0.05, 0.15}.
    pub fn default_grid() -> Vec<CsebbParams> {
        let mut grid = Vec::new();
        for window in [3, 7, 11, 21] {
            for rel_merge in [0.1, 0.2, 0.3] {
                for abs_merge in [0.05, 0.15] {
                    grid.push(CsebbParams {
                        window,
                        rel_merge,
                        abs_merge,
                        ..Default::default()
                    });
                }
            }
        }
        grid
    }
}

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Sliding median with edge replication.
pub fn median_filter(scores: &[f64], window: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(invalid("median window must be odd"));
    }
    let n = scores.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if window > 2 * n - 1 {
        return Err(invalid("median window longer than 2T − 1"));
    }
    let half = (window / 2) as isize;
    let mut buf = Vec::with_capacity(window);
    Ok((0..n as isize)
        .map(|t| {
            buf.clear();
            buf.extend((t - half..=t + half).map(|i| scores[clamp_index(i, n)]));
            buf.sort_by(f64::total_cmp);
            buf[window / 2]
        })
        .collect())
}

/// Centered moving average with edge replication.
pub fn moving_average(scores: &[f64], window: usize) -> Vec<f64> {
    let n = scores.len();
    if n == 0 || window <= 1 {
        return scores.to_vec();
    }
    let half = (window / 2) as isize;
    (0..n as isize)
        .map(|t| (t - half..=t + half).map(|i| scores[clamp_index(i, n)]).sum::<f64>() / window as f64)
        .collect()
}

/// Median-filters every class track of a posteriorgram.
pub fn median_filter_post(post: &Posteriorgram, windows: &[usize]) -> Result<Posteriorgram> {
    if windows.len() != post.n_classes() {
        return Err(shape("one median window per class is required"));
    }
    let mut scores = post.scores().to_owned();
    for (c, &w) in windows.iter().enumerate() {
        let track: Vec<f64> = post.class_track(c).to_vec();
        let filtered = median_filter(&track, w)?;
        scores.column_mut(c).assign(&ndarray::ArrayView1::from(&filtered));
    }
    Posteriorgram::new(post.clip_id(), post.frame_period(), scores)
}

/// Maximal runs `[start, end)` of frames strictly above `threshold`.
pub fn positive_runs(track: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &v) in track.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                runs.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, track.len()));
    }
    runs
}

/// Frame thresholding followed by merging of consecutive positive frames.
pub fn frame_threshold_merge(post: &Posteriorgram, thresholds: &[f64]) -> Result<EventList> {
    if thresholds.len() != post.n_classes() {
        return Err(shape("one threshold per class is required"));
    }
    let fp = post.frame_period();
    let mut events = Vec::new();
    for (c, &thr) in thresholds.iter().enumerate() {
        let track: Vec<f64> = post.class_track(c).to_vec();
        for (s, e) in positive_runs(&track, thr) {
            events.push(Event::new(post.clip_id(), c, s as f64 * fp, e as f64 * fp));
        }
    }
    canonicalize_events(events)
}

/// Step filter `ȳ[t+s] − ȳ[t−s]` with edge replication.
pub fn step_filter(smoothed: &[f64], step: usize) -> Vec<f64> {
    let n = smoothed.len();
    let s = step as isize;
    (0..n as isize)
        .map(|t| smoothed[clamp_index(t + s, n)] - smoothed[clamp_index(t - s, n)])
        .collect()
}

/// Frame indices where a new segment starts.
///
/// Runs of identical step-filter values are treated as one extremum located
/// at the run's center, or `step` frames in from its inner end when the run
/// touches the clip edge. A run is a change point when its magnitude exceeds
/// `min_gap` and dominates every same-signed response within `±step` frames
/// (strictly on the left, so ties resolve to the leftmost run).
pub fn change_points(delta: &[f64], step: usize, min_gap: f64) -> Vec<usize> {
    let n = delta.len();
    let mut runs = Vec::new();
    let mut a = 0;
    while a < n {
        let mut b = a;
        while b + 1 < n && delta[b + 1] == delta[a] {
            b += 1;
        }
        runs.push((a, b));
        a = b + 1;
    }
    let mut points = Vec::new();
    for &(a, b) in &runs {
        let v = delta[a];
        if !(v.abs() > min_gap) {
            continue;
        }
        let same_sign = |u: usize| delta[u].signum() == v.signum();
        let lo = a.saturating_sub(step);
        let hi = (b + step).min(n - 1);
        let left_ok = (lo..a).all(|u| !same_sign(u) || delta[u].abs() < v.abs());
        let right_ok = (b + 1..=hi).all(|u| !same_sign(u) || delta[u].abs() <= v.abs());
        if left_ok && right_ok {
            // a clean step at p gives the run [p − s, p + s − 1]; runs cut
            // short by the clip edge are anchored on their inner end
            let boundary = match (a == 0, b == n - 1) {
                (false, true) => a + step,
                (true, false) => (b + 1).saturating_sub(step),
                _ => (a + b + 1) / 2,
            };
            if boundary > 0 && boundary < n {
                points.push(boundary);
            }
        }
    }
    points.dedup();
    points
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: usize,
    end: usize,
    sum: f64,
}

impl Segment {
    fn mean(&self) -> f64 {
        self.sum / (self.end - self.start) as f64
    }
}

/// Greedily merges the most similar adjacent pair while its mean
/// difference stays below `max(abs_merge, rel_merge · larger mean)`.
pub fn merge_segments(values: &[f64], boundaries: &[usize], rel_merge: f64, abs_merge: f64) -> Vec<(usize, usize, f64)> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut cuts = Vec::with_capacity(boundaries.len() + 2);
    cuts.push(0);
    cuts.extend(boundaries.iter().copied().filter(|&b| b > 0 && b < n));
    cuts.push(n);
    cuts.dedup();
    let mut segs: Vec<Segment> = cuts
        .windows(2)
        .map(|w| Segment {
            start: w[0],
            end: w[1],
            sum: values[w[0]..w[1]].iter().sum(),
        })
        .collect();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..segs.len().saturating_sub(1) {
            let (m1, m2) = (segs[i].mean(), segs[i + 1].mean());
            let diff = (m1 - m2).abs();
            if diff < abs_merge.max(rel_merge * m1.max(m2)) && best.map_or(true, |(_, d)| diff < d) {
                best = Some((i, diff));
            }
        }
        let Some((i, _)) = best else { break };
        let right = segs.remove(i + 1);
        segs[i].end = right.end;
        segs[i].sum += right.sum;
    }
    segs.iter().map(|s| (s.start, s.end, s.mean())).collect()
}

/// Change-point boxes for a single class track, as frame ranges with
/// confidence.
pub fn csebb_track(track: &[f64], params: &CsebbParams) -> Result<Vec<(usize, usize, f64)>> {
    params.validate()?;
    let smoothed = moving_average(track, params.window);
    let delta = step_filter(&smoothed, params.step);
    let cps = change_points(&delta, params.step, params.min_gap);
    Ok(merge_segments(&smoothed, &cps, params.rel_merge, params.abs_merge)
        .into_iter()
        .filter(|&(_, _, m)| m > NOISE_FLOOR)
        .collect())
}

/// Runs the change-point detector on every class track. `params` holds one
/// entry per class.
pub fn csebb_detect(post: &Posteriorgram, params: &[CsebbParams]) -> Result<Vec<Sebb>> {
    if params.len() != post.n_classes() {
        return Err(shape("one parameter set per class is required"));
    }
    let mut out = Vec::new();
    for (c, p) in params.iter().enumerate() {
        csebb_class_into(post, c, p, &mut out)?;
    }
    Ok(out)
}

fn csebb_class_into(post: &Posteriorgram, class_idx: usize, params: &CsebbParams, out: &mut Vec<Sebb>) -> Result<()> {
    let fp = post.frame_period();
    let track: Vec<f64> = post.class_track(class_idx).to_vec();
    for (s, e, conf) in csebb_track(&track, params)? {
        out.push(Sebb {
            clip_id: post.clip_id().into(),
            class_idx,
            onset: s as f64 * fp,
            offset: e as f64 * fp,
            confidence: conf.clamp(0.0, 1.0),
        });
    }
    Ok(())
}

/// Keeps boxes whose confidence exceeds their class threshold; boundaries
/// are copied unchanged.
pub fn event_threshold(sebbs: &[Sebb], class_thresholds: &[f64]) -> Result<EventList> {
    let events = sebbs
        .iter()
        .filter(|b| {
            class_thresholds
                .get(b.class_idx)
                .is_some_and(|&thr| b.confidence > thr)
        })
        .map(Sebb::to_event)
        .collect();
    canonicalize_events(events)
}

/// Cell-wise mean of posteriorgrams of the same clip. Each cell is summed
/// in sorted order, so the result does not depend on input order.
pub fn ensemble_average(posts: &[Posteriorgram]) -> Result<Posteriorgram> {
    let first = posts.first().ok_or_else(|| Error::Empty("no posteriorgrams to average".into()))?;
    for p in &posts[1..] {
        if p.scores().dim() != first.scores().dim() {
            return Err(shape("posteriorgrams differ in shape"));
        }
        if p.frame_period() != first.frame_period() {
            return Err(invalid("posteriorgrams differ in frame period"));
        }
        if p.clip_id() != first.clip_id() {
            return Err(invalid("posteriorgrams belong to different clips"));
        }
    }
    let n = posts.len() as f64;
    let mut cell = Vec::with_capacity(posts.len());
    let scores = Array2::from_shape_fn(first.scores().dim(), |(t, c)| {
        cell.clear();
        cell.extend(posts.iter().map(|p| p.scores()[[t, c]]));
        cell.sort_by(f64::total_cmp);
        (cell.iter().sum::<f64>() / n).clamp(0.0, 1.0)
    });
    Posteriorgram::new(first.clip_id(), first.frame_period(), scores)
}

/// Per-class grid search. `metric(class, boxes, refs)` scores the boxes of
/// one class over all validation clips; larger is better.
pub fn tune_csebb<F>(posts: &[Posteriorgram], refs: &EventList, grid: &[CsebbParams], mut metric: F) -> Result<Vec<CsebbParams>>
where
    F: FnMut(usize, &[Sebb], &EventList) -> f64,
{
    if grid.is_empty() {
        return Err(invalid("tuning grid is empty"));
    }
    for p in grid {
        p.validate()?;
    }
    let n_classes = posts.first().map_or(0, Posteriorgram::n_classes);
    if posts.iter().any(|p| p.n_classes() != n_classes) {
        return Err(shape("validation posteriorgrams differ in class count"));
    }
    let mut chosen = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let mut best: Option<(f64, CsebbParams)> = None;
        for cand in grid {
            let mut boxes = Vec::new();
            for post in posts {
                csebb_class_into(post, c, cand, &mut boxes)?;
            }
            let score = metric(c, &boxes, refs);
            let better = match &best {
                None => true,
                Some((s, p)) => score > *s || (score == *s && cand.tie_cmp(p) == Ordering::Less),
            };
            if better {
                best = Some((score, *cand));
            }
        }
        chosen.push(best.map(|(_, p)| p).expect("grid is non-empty"));
    }
    Ok(chosen)
}
