//! Independent reference implementations used as test oracles, plus the
//! random cases they are checked on. The oracles favour obviousness over
//! speed and share no code with the library routes they check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hetsed_core::fdy::{AttentionNet, FdyParams};
use hetsed_core::{canonicalize_events, Event, EventList};
use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mixed row of one instance with its partner statistics frozen.
pub fn mixstyle_row(x: &[f64], mu_j: f64, sigma_j: f64, lambda: f64, eps: f64) -> Vec<f64> {
    let mu = mean(x);
    let sigma = pop_std(x).max(eps);
    let mu_mix = lambda * mu + (1.0 - lambda) * mu_j;
    let sigma_mix = lambda * sigma + (1.0 - lambda) * sigma_j.max(eps);
    x.iter().map(|v| sigma_mix * (v - mu) / sigma + mu_mix).collect()
}

/// Central finite-difference gradient of `⟨upstream, mix(batch)⟩` with every
/// partner's statistics taken from the unperturbed batch.
pub fn mixstyle_fd_grad(batch: ArrayView3<f64>, perm: &[usize], lambda: f64, eps: f64, upstream: ArrayView3<f64>, h: f64) -> Array3<f64> {
    let (b, f, t) = batch.dim();
    let mut grad = Array3::zeros((b, f, t));
    for i in 0..b {
        let j = perm[i];
        for k in 0..f {
            let row: Vec<f64> = batch.slice(ndarray::s![i, k, ..]).to_vec();
            let g: Vec<f64> = upstream.slice(ndarray::s![i, k, ..]).to_vec();
            let partner: Vec<f64> = batch.slice(ndarray::s![j, k, ..]).to_vec();
            let objective = |r: &[f64]| -> f64 {
                let out = if j == i { r.to_vec() } else { mixstyle_row(r, mean(&partner), pop_std(&partner), lambda, eps) };
                out.iter().zip(&g).map(|(o, g)| o * g).sum()
            };
            for s in 0..t {
                let mut plus = row.clone();
                let mut minus = row.clone();
                plus[s] += h;
                minus[s] -= h;
                grad[[i, k, s]] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
        }
    }
    grad
}

/// Zero-padded "same" 2-D convolution (cross-correlation).
pub fn plain_conv(input: ArrayView3<f64>, kernel: &Array4<f64>) -> Array3<f64> {
    let (c_in, f, t) = input.dim();
    let (c_out, _, kf, kt) = kernel.dim();
    let mut out = Array3::zeros((c_out, f, t));
    for o in 0..c_out {
        for y in 0..f as i64 {
            for x in 0..t as i64 {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for i in 0..kf as i64 {
                        for j in 0..kt as i64 {
                            let (yy, xx) = (y + i - kf as i64 / 2, x + j - kt as i64 / 2);
                            if yy >= 0 && yy < f as i64 && xx >= 0 && xx < t as i64 {
                                acc += kernel[[o, c, i as usize, j as usize]] * input[[c, yy as usize, xx as usize]];
                            }
                        }
                    }
                }
                out[[o, y as usize, x as usize]] = acc;
            }
        }
    }
    out
}

/// `Σ_k attention[f, k] · conv_k[:, f, :]`.
pub fn fdy_reference(input: ArrayView3<f64>, basis: &[Array4<f64>], attention: ArrayView2<f64>) -> Array3<f64> {
    let convs: Vec<Array3<f64>> = basis.iter().map(|k| plain_conv(input, k)).collect();
    let (c_out, f, t) = convs[0].dim();
    Array3::from_shape_fn((c_out, f, t), |(o, y, x)| (0..basis.len()).map(|k| attention[[y, k]] * convs[k][[o, y, x]]).sum())
}

/// Time grid used by the PSDS oracle. Events must start and end on it.
pub const CELL: f64 = 0.25;

fn cells(e: &Event) -> BTreeSet<i64> {
    ((e.onset / CELL).round() as i64..(e.offset / CELL).round() as i64).collect()
}

fn class_point(dets: &[&Event], refs: &[Event], class_idx: usize, hours: f64, rho_dtc: f64, rho_gtc: f64) -> (f64, f64) {
    let own_refs: Vec<&Event> = refs.iter().filter(|r| r.class_idx == class_idx).collect();
    let mut fp = 0;
    let mut passing: Vec<&Event> = Vec::new();
    for d in dets {
        let covered: BTreeSet<i64> = own_refs.iter().filter(|r| r.clip_id == d.clip_id).flat_map(|r| cells(r)).collect();
        let mine = cells(d);
        let hit = mine.intersection(&covered).count() as f64 / mine.len() as f64;
        if hit >= rho_dtc {
            passing.push(d);
        } else {
            fp += 1;
        }
    }
    let mut tp = 0;
    for r in &own_refs {
        let covered: BTreeSet<i64> = passing.iter().filter(|d| d.clip_id == r.clip_id).flat_map(|d| cells(d)).collect();
        let mine = cells(r);
        if mine.intersection(&covered).count() as f64 / mine.len() as f64 >= rho_gtc {
            tp += 1;
        }
    }
    (fp as f64 / hours, tp as f64 / own_refs.len() as f64)
}

/// PSDS by enumerating every joint choice of per-class thresholds (each
/// class: one of its distinct confidences, or "reject all").
pub fn psds_bruteforce(dets: &[Event], refs: &[Event], n_classes: usize, hours: f64, rho: f64, alpha_st: f64, e_max: f64) -> f64 {
    let classes: Vec<usize> = (0..n_classes).filter(|&c| refs.iter().any(|r| r.class_idx == c)).collect();
    let options: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = dets.iter().filter(|d| d.class_idx == c).map(|d| d.confidence.unwrap()).collect();
            v.push(f64::INFINITY);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let mut points: Vec<BTreeSet<(u64, u64)>> = vec![BTreeSet::new(); classes.len()];
    let mut choice = vec![0usize; classes.len()];
    loop {
        for (slot, &c) in classes.iter().enumerate() {
            let thr = options[slot][choice[slot]];
            let kept: Vec<&Event> = dets.iter().filter(|d| d.class_idx == c && d.confidence.unwrap() >= thr).collect();
            let (e, tpr) = class_point(&kept, refs, c, hours, rho, rho);
            points[slot].insert((e.to_bits(), tpr.to_bits()));
        }
        let mut k = 0;
        while k < choice.len() {
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == choice.len() {
            break;
        }
    }
    let points: Vec<Vec<(f64, f64)>> = points
        .iter()
        .map(|s| s.iter().map(|&(a, b)| (f64::from_bits(a), f64::from_bits(b))).collect())
        .collect();
    let mut xs: Vec<f64> = points.iter().flatten().map(|p| p.0).filter(|&e| e < e_max).collect();
    xs.push(0.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let etpr = |e: f64| {
        let tprs: Vec<f64> = points
            .iter()
            .map(|pts| pts.iter().filter(|p| p.0 <= e).map(|p| p.1).fold(0.0, f64::max))
            .collect();
        (mean(&tprs) - alpha_st * pop_std(&tprs)).max(0.0)
    };
    let mut area = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let next = xs.get(i + 1).copied().unwrap_or(e_max);
        area += (next - x) * etpr(x);
    }
    area / e_max
}

/// Standardized partial AUC of one class by counting at every threshold.
pub fn pauc_bruteforce(scores: &[f64], labels: &[bool], max_fpr: f64) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&thr| {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= thr).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(s, l)| !**l && **s >= thr).count() as f64;
            (fp / neg, tp / pos)
        })
        .collect();
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let right = x1.min(max_fpr);
        if right <= x0 {
            continue;
        }
        let y_right = if x1 == x0 { y1 } else { y0 + (y1 - y0) * (right - x0) / (x1 - x0) };
        area += (right - x0) * (y0 + y_right) / 2.0;
    }
    let lo = max_fpr * max_fpr / 2.0;
    0.5 * (1.0 + (area - lo) / (max_fpr - lo))
}

pub fn mpauc_bruteforce(scores: ArrayView2<f64>, labels: ArrayView2<bool>, max_fpr: f64) -> f64 {
    let mut vals = Vec::new();
    for c in 0..scores.ncols() {
        let s: Vec<f64> = scores.column(c).to_vec();
        let l: Vec<bool> = labels.column(c).to_vec();
        if l.iter().any(|&x| x) && l.iter().any(|&x| !x) {
            vals.push(pauc_bruteforce(&s, &l, max_fpr));
        }
    }
    mean(&vals)
}

/// Among all segmentations of `values` in which no adjacent pair satisfies
/// the merge rule, the one with the smallest within-segment squared error
/// (fewest segments on ties). Exponential in the length.
pub fn best_segmentation(values: &[f64], rel: f64, abs: f64) -> Vec<(usize, usize, f64)> {
    let n = values.len();
    let mut best: Option<(f64, Vec<(usize, usize, f64)>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut segs = Vec::new();
        let mut start = 0;
        for b in 1..n {
            if cuts & (1 << (b - 1)) != 0 {
                segs.push((start, b));
                start = b;
            }
        }
        segs.push((start, n));
        let stats: Vec<(usize, usize, f64)> = segs.iter().map(|&(a, b)| (a, b, mean(&values[a..b]))).collect();
        let mergeable = stats.windows(2).any(|w| {
            let (m1, m2) = (w[0].2, w[1].2);
            (m1 - m2).abs() < abs.max(rel * m1.max(m2))
        });
        if mergeable {
            continue;
        }
        let sse: f64 = stats.iter().map(|&(a, b, m)| values[a..b].iter().map(|v| (v - m).powi(2)).sum::<f64>()).sum();
        let better = match &best {
            None => true,
            Some((s, segs)) => sse < s - 1e-12 || ((sse - s).abs() <= 1e-12 && stats.len() < segs.len()),
        };
        if better {
            best = Some((sse, stats));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Hard segment labels as a matrix.
pub fn to_bool(m: &Array2<f64>) -> Array2<bool> {
    m.map(|&v| v >= 0.5)
}

/// Random FDY layer with 3x3 kernels: C ≤ 4, F ≤ 16, T ≤ 32.
pub fn random_fdy(rng: &mut ChaCha8Rng, k: usize) -> (Array3<f64>, FdyParams) {
    let (c_in, c_out) = (rng.random_range(1..5), rng.random_range(1..5));
    let (f, t) = (rng.random_range(1..17), rng.random_range(1..33));
    let input = Array3::from_shape_fn((c_in, f, t), |_| rng.random_range(-1.0..1.0));
    let basis = (0..k)
        .map(|_| Array4::from_shape_fn((c_out, c_in, 3, 3), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let attention = AttentionNet {
        weights: Array2::from_shape_fn((k, 3), |_| rng.random_range(-1.0..1.0)),
        bias: (0..k).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    (input, FdyParams { basis, attention, temperature: rng.random_range(0.5..40.0) })
}

fn grid_event(rng: &mut ChaCha8Rng, clip: &str, n_classes: usize) -> Event {
    let onset = rng.random_range(0..32) as f64 * CELL;
    let len = rng.random_range(1..9) as f64 * CELL;
    Event::new(clip, rng.random_range(0..n_classes), onset, onset + len)
}

/// Random PSDS case with at most 4 references, 3 classes and 5 distinct
/// confidence values.
pub fn random_psds_case(rng: &mut ChaCha8Rng) -> (EventList, EventList, usize) {
    let n_classes = rng.random_range(1..4);
    let clips = ["a", "b"];
    let n_refs = rng.random_range(1..5);
    let refs: Vec<Event> = (0..n_refs)
        .map(|_| {
            let clip = clips[rng.random_range(0..2)];
            grid_event(rng, clip, n_classes)
        })
        .collect();
    let levels: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(1..100) as f64 / 100.0).collect();
    let mut dets = Vec::new();
    for r in &refs {
        if rng.random_bool(0.7) {
            // a jittered copy of a reference
            let shift = rng.random_range(-2i32..3) as f64 * CELL;
            let onset = (r.onset + shift).max(0.0);
            let offset = (r.offset + rng.random_range(-1i32..3) as f64 * CELL).max(onset + CELL);
            dets.push(Event::new(r.clip_id.clone(), r.class_idx, onset, offset).with_confidence(levels[rng.random_range(0..levels.len())]));
        }
    }
    for _ in 0..rng.random_range(0..4) {
        let clip = clips[rng.random_range(0..2)];
        let e = grid_event(rng, clip, n_classes);
        dets.push(e.with_confidence(levels[rng.random_range(0..levels.len())]));
    }
    (canonicalize_events(dets).unwrap(), canonicalize_events(refs).unwrap(), n_classes)
}
