//! Synthetic ground truth and imperfect posteriorgrams.
//!
//! Events are snapped to the frame grid so that a noiseless rendering
//! decodes back to the exact reference boundaries.

use alloc::format;
use alloc::vec::Vec;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{invalid, Result};
use crate::types::{canonicalize_events, ClipMetadata, Dataset, Event, EventList, Posteriorgram};

pub const MIN_EVENT_SECONDS: f64 = 0.25;
pub const MAX_EVENT_SECONDS: f64 = 5.0;
/// Dips are only planted in events at least this long.
pub const DIP_MIN_EVENT_SECONDS: f64 = 2.0;
/// Multiplicative depth of a planted dip.
pub const DIP_FACTOR: f64 = 0.3;

const PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthConfig {
    pub n_clips: usize,
    pub n_classes: usize,
    pub mean_events_per_clip: f64,
    pub clip_len: f64,
    /// Event boundaries are multiples of this period.
    pub frame_period: f64,
    pub dataset: Dataset,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            n_clips: 200,
            n_classes: 10,
            mean_events_per_clip: 3.0,
            clip_len: 10.0,
            frame_period: 0.016,
            dataset: Dataset::DesedStrong,
        }
    }
}

pub fn clip_name(i: usize) -> alloc::string::String {
    format!("synth_{i:05}")
}

fn frames_in(seconds: f64, frame_period: f64) -> usize {
    libm::round(seconds / frame_period) as usize
}

/// Poisson event counts, uniform onsets and log-uniform durations clipped
/// to the clip. Onsets leave room for the shortest duration. Events of
/// one class never overlap or touch within a clip; an onset that collides
/// is redrawn, and the event is dropped after repeated collisions.
pub fn gen_ground_truth<R: Rng + ?Sized>(cfg: &GroundTruthConfig, rng: &mut R) -> Result<(EventList, Vec<ClipMetadata>)> {
    if cfg.n_classes == 0 {
        return Err(invalid("at least one class is required"));
    }
    if !(cfg.mean_events_per_clip >= 0.0 && cfg.mean_events_per_clip.is_finite()) {
        return Err(invalid("event rate must be finite and non-negative"));
    }
    if !(cfg.frame_period > 0.0 && cfg.clip_len >= cfg.frame_period) {
        return Err(invalid("clip must span at least one frame"));
    }
    let poisson = if cfg.mean_events_per_clip > 0.0 {
        Some(Poisson::new(cfg.mean_events_per_clip).map_err(|_| invalid("bad event rate"))?)
    } else {
        None
    };
    let n_frames = frames_in(cfg.clip_len, cfg.frame_period);
    let (ln_lo, ln_hi) = (libm::log(MIN_EVENT_SECONDS), libm::log(MAX_EVENT_SECONDS));
    let mut events = Vec::new();
    let mut metas = Vec::with_capacity(cfg.n_clips);
    for i in 0..cfg.n_clips {
        let clip = clip_name(i);
        let count = poisson.as_ref().map_or(0, |p| p.sample(rng) as usize);
        let mut taken: Vec<(usize, usize, usize)> = Vec::new();
        for _ in 0..count {
            let class_idx = rng.random_range(0..cfg.n_classes);
            let dur = libm::exp(rng.random_range(ln_lo..ln_hi));
            for _ in 0..PLACEMENT_ATTEMPTS {
                let onset = rng.random_range(0.0..(cfg.clip_len - MIN_EVENT_SECONDS).max(cfg.frame_period));
                let a = frames_in(onset, cfg.frame_period).min(n_frames - 1);
                let b = frames_in(onset + dur, cfg.frame_period).clamp(a + 1, n_frames);
                let clash = taken.iter().any(|&(c, s, e)| c == class_idx && a <= e && s <= b);
                if !clash {
                    taken.push((class_idx, a, b));
                    break;
                }
            }
        }
        for (c, a, b) in taken {
            events.push(Event::new(clip.clone(), c, a as f64 * cfg.frame_period, b as f64 * cfg.frame_period));
        }
        metas.push(ClipMetadata::new(clip, cfg.dataset, n_frames as f64 * cfg.frame_period)?);
    }
    Ok((canonicalize_events(events)?, metas))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub frame_period: f64,
    /// Moving-average blur width in frames; 0 or 1 disables it.
    pub blur: usize,
    pub noise_sd: f64,
    pub dip_prob: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            frame_period: 0.016,
            blur: 3,
            noise_sd: 0.05,
            dip_prob: 1.0,
        }
    }
}

/// A planted dip: `width` frames starting at `start` in class `class_idx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dip {
    pub class_idx: usize,
    pub start: usize,
    pub width: usize,
}

/// Rendered posteriorgram with the dips planted in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub post: Posteriorgram,
    pub dips: Vec<Dip>,
}

fn blur_track(track: &mut [f64], width: usize) {
    if width <= 1 {
        return;
    }
    let n = track.len() as isize;
    let (left, right) = (((width - 1) / 2) as isize, (width / 2) as isize);
    let src = track.to_vec();
    for t in 0..n {
        let sum: f64 = (t - left..=t + right).filter(|&i| i >= 0 && i < n).map(|i| src[i as usize]).sum();
        track[t as usize] = sum / width as f64;
    }
}

/// Renders one posteriorgram per clip: rectangles at frames whose center
/// lies inside an event, a moving-average blur, dips inside long events,
/// additive Gaussian noise, and clipping to `[0, 1]`.
pub fn render_posteriors<R: Rng + ?Sized>(
    refs: &EventList,
    clips: &[ClipMetadata],
    n_classes: usize,
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<Vec<Rendered>> {
    if !(cfg.frame_period > 0.0) || !cfg.noise_sd.is_finite() || cfg.noise_sd < 0.0 {
        return Err(invalid("frame period must be positive and noise finite"));
    }
    if !(0.0..=1.0).contains(&cfg.dip_prob) {
        return Err(invalid("dip probability must lie in [0, 1]"));
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|_| invalid("bad noise level"))?;
    let fp = cfg.frame_period;
    let mut out = Vec::with_capacity(clips.len());
    for meta in clips {
        let n_frames = frames_in(meta.duration, fp).max(1);
        let mut scores = Array2::<f64>::zeros((n_frames, n_classes));
        let clip_events: Vec<&Event> = refs.iter().filter(|e| e.clip_id == meta.clip_id && e.class_idx < n_classes).collect();
        for e in &clip_events {
            for t in 0..n_frames {
                let center = (t as f64 + 0.5) * fp;
                if center >= e.onset && center < e.offset {
                    scores[[t, e.class_idx]] = 1.0;
                }
            }
        }
        for mut col in scores.columns_mut() {
            let mut track = col.to_vec();
            blur_track(&mut track, cfg.blur);
            col.assign(&ndarray::ArrayView1::from(&track));
        }
        let mut dips = Vec::new();
        for e in &clip_events {
            if e.duration() < DIP_MIN_EVENT_SECONDS || !rng.random_bool(cfg.dip_prob) {
                continue;
            }
            let a = frames_in(e.onset, fp);
            let b = frames_in(e.offset, fp).min(n_frames);
            let width = rng.random_range(2..=4usize);
            let margin = cfg.blur.max(5);
            let start = rng.random_range(a + margin..=b - margin - width);
            for t in start..start + width {
                scores[[t, e.class_idx]] *= DIP_FACTOR;
            }
            dips.push(Dip { class_idx: e.class_idx, start, width });
        }
        if cfg.noise_sd > 0.0 {
            scores.mapv_inplace(|v| v + noise.sample(rng));
        }
        scores.mapv_inplace(|v| v.clamp(0.0, 1.0));
        out.push(Rendered {
            post: Posteriorgram::new(meta.clip_id.clone(), fp, scores)?,
            dips,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postprocess::frame_threshold_merge;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean() -> RenderConfig {
        RenderConfig { blur: 0, noise_sd: 0.0, dip_prob: 0.0, ..Default::default() }
    }

    #[test]
    fn determinism_and_empty_rate() {
        let cfg = GroundTruthConfig { n_clips: 20, ..Default::default() };
        let a = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let none = GroundTruthConfig { mean_events_per_clip: 0.0, ..cfg };
        let (ev, metas) = gen_ground_truth(&none, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(ev.is_empty());
        assert_eq!(metas.len(), 20);
    }

    #[test]
    fn events_are_within_bounds() {
        let cfg = GroundTruthConfig { n_clips: 300, ..Default::default() };
        let (ev, metas) = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(metas.iter().all(|m| (m.duration - 10.0).abs() < 1e-9));
        for e in &ev {
            assert!(e.onset >= 0.0 && e.offset <= 10.0 + 1e-9 && e.offset > e.onset);
            assert!(e.duration() <= MAX_EVENT_SECONDS + cfg.frame_period && e.duration() >= MIN_EVENT_SECONDS - cfg.frame_period);
        }
    }

    #[test]
    fn mean_event_count() {
        let cfg = GroundTruthConfig { n_clips: 10_000, mean_events_per_clip: 3.0, ..Default::default() };
        let (ev, _) = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let mean = ev.len() as f64 / 10_000.0;
        assert!((mean - 3.0).abs() / 3.0 < 0.05, "{mean}");
    }

    #[test]
    fn clean_render_decodes_exactly() {
        let cfg = GroundTruthConfig { n_clips: 30, ..Default::default() };
        let (ev, metas) = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let rendered = render_posteriors(&ev, &metas, 10, &clean(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let mut decoded = Vec::new();
        for r in &rendered {
            assert!(r.post.scores().iter().all(|v| *v == 0.0 || *v == 1.0));
            decoded.extend(frame_threshold_merge(&r.post, &[0.5; 10]).unwrap().into_vec());
        }
        assert_eq!(canonicalize_events(decoded).unwrap(), ev);
    }

    #[test]
    fn noisy_render_stays_in_unit_interval() {
        let cfg = GroundTruthConfig { n_clips: 10, ..Default::default() };
        let (ev, metas) = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let rc = RenderConfig { noise_sd: 0.5, ..Default::default() };
        let rendered = render_posteriors(&ev, &metas, 10, &rc, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(rendered.iter().all(|r| r.post.scores().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn every_long_event_gets_a_dip() {
        let cfg = GroundTruthConfig { n_clips: 100, ..Default::default() };
        let (ev, metas) = gen_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let rc = RenderConfig { noise_sd: 0.0, dip_prob: 1.0, blur: 3, ..Default::default() };
        let rendered = render_posteriors(&ev, &metas, 10, &rc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut long = 0;
        for r in &rendered {
            for e in ev.iter().filter(|e| e.clip_id == r.post.clip_id() && e.duration() >= DIP_MIN_EVENT_SECONDS) {
                long += 1;
                let a = libm::round(e.onset / rc.frame_period) as usize;
                let b = libm::round(e.offset / rc.frame_period) as usize;
                let track = r.post.class_track(e.class_idx);
                let low: Vec<usize> = (a..b).filter(|&t| track[t] < 0.5).collect();
                // the dip is a single run of 2 to 4 sub-threshold frames away from the edges
                let inner: Vec<usize> = low.into_iter().filter(|&t| t > a + 1 && t + 2 < b).collect();
                assert!((2..=4).contains(&inner.len()), "{inner:?}");
                assert_eq!(inner.last().unwrap() - inner[0] + 1, inner.len());
            }
        }
        assert!(long > 20);
        assert_eq!(rendered.iter().map(|r| r.dips.len()).sum::<usize>(), long);
    }
}
