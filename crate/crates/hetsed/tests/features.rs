use std::f64::consts::PI;

use hetsed::features::*;
use hetsed::formats::{decode_features, encode_features};
use ndarray::Array2;
use proptest::prelude::*;

fn clip(samples: Vec<f64>) -> AudioClip {
    AudioClip::new("c", samples, SAMPLE_RATE).unwrap()
}

fn extractor(hop: usize) -> Extractor {
    Extractor::new(FeatureConfig { hop, ..FeatureConfig::default() }).unwrap()
}

fn sine(freq: f64, seconds: f64, amp: f64) -> Vec<f64> {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()).collect()
}

#[test]
fn frame_counts_follow_the_window_formula() {
    // 1 + floor((160000 - 2048) / hop)
    assert_eq!(num_frames(160_000, 2048, 256).unwrap(), 1 + 157_952 / 256);
    assert_eq!(num_frames(160_000, 2048, 256).unwrap(), 618);
    assert_eq!(num_frames(160_000, 2048, 160).unwrap(), 988);
    assert_eq!(num_frames(2048, 2048, 256).unwrap(), 1);
    assert!(num_frames(2047, 2048, 256).is_err());
    assert!(num_frames(4096, 2048, 0).is_err());
}

#[test]
fn clips_are_padded_or_truncated_to_ten_seconds() {
    let short = clip(vec![0.5; 8 * 16_000]);
    let padded = pad_or_trim(&short, 10.0);
    assert_eq!(padded.samples.len(), 160_000);
    assert!(padded.samples[..128_000].iter().all(|&s| s == 0.5));
    assert!(padded.samples[128_000..].iter().all(|&s| s == 0.0));

    let exact = clip(sine(440.0, 10.0, 0.3));
    assert_eq!(pad_or_trim(&exact, 10.0), exact);

    let long: Vec<f64> = (0..12 * 16_000).map(|i| i as f64 / 1e6).collect();
    let trimmed = pad_or_trim(&clip(long.clone()), 10.0);
    assert_eq!(trimmed.samples, long[..160_000].to_vec());
}

#[test]
fn audio_clip_rejects_bad_input() {
    assert!(AudioClip::new("x", vec![0.0, f64::NAN], 16_000).is_err());
    assert!(AudioClip::new("x", vec![0.0], 0).is_err());
}

#[test]
fn hann_window_is_periodic() {
    let w = hann(8);
    assert_eq!(w[0], 0.0);
    assert!((w[4] - 1.0).abs() < 1e-15);
    assert!((w[2] - 0.5).abs() < 1e-15);
    assert!((w[1] - w[7]).abs() < 1e-15);
}

#[test]
fn zero_clip_gives_zero_spectrum_and_floored_log_mel() {
    let e = extractor(256);
    let mag = e.stft_magnitude(&vec![0.0; 160_000]).unwrap();
    assert_eq!(mag.dim(), (618, 1025));
    assert!(mag.iter().all(|&v| v == 0.0));
    let mel = e.extract(&clip(vec![0.0; 16_000])).unwrap();
    assert_eq!(mel.values.dim(), (618, 128));
    assert!(mel.values.iter().all(|&v| v == (1e-10f64).ln()));
    assert_eq!(mel.frame_period, 0.016);
    assert_eq!(mel.mel_range, (0.0, 8000.0));
}

#[test]
fn sine_peaks_at_its_bin() {
    for k in [16usize, 64, 300] {
        let freq = k as f64 * 16_000.0 / 2048.0;
        let e = extractor(160);
        let mag = e.stft_magnitude(&sine(freq, 1.0, 0.5)).unwrap();
        for t in 1..mag.nrows() - 1 {
            let row = mag.row(t);
            let arg = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(arg, k, "frame {t}");
        }
        // A Hann-windowed bin-centred sine of amplitude A peaks at A·N/4.
        assert!((mag[[1, k]] - 0.5 * 2048.0 / 4.0).abs() < 1e-6);
    }
}

#[test]
fn htk_mel_scale_reference_points() {
    assert!((hz_to_mel(0.0)).abs() < 1e-12);
    assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
    for hz in [0.0, 123.0, 1000.0, 8000.0] {
        assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
    }
}

#[test]
fn filterbank_rows_are_contiguous_triangles() {
    let fb = mel_filterbank(128, 0.0, 8000.0, 16_000, 2048).unwrap();
    assert_eq!(fb.dim(), (128, 1025));
    let mut last_peak = None;
    for row in fb.rows() {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!(row.sum() > 0.0);
        let support: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
        assert_eq!(support.last().unwrap() - support[0] + 1, support.len(), "support is not contiguous");
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        if let Some(p) = last_peak {
            assert!(peak >= p);
        }
        last_peak = Some(peak);
    }
    let centres = mel_center_frequencies(128, 0.0, 8000.0);
    assert!(centres.windows(2).all(|w| w[0] < w[1]));
    assert!(mel_filterbank(1, 0.0, 8000.0, 16_000, 2048).is_err());
    assert!(mel_filterbank(64, 0.0, 9000.0, 16_000, 2048).is_err());
    assert!(mel_filterbank(64, 100.0, 50.0, 16_000, 2048).is_err());
}

#[test]
fn doubling_amplitude_adds_log_four() {
    let e = extractor(256);
    let x = sine(1000.0, 10.0, 0.1);
    let a = e.extract(&clip(x.clone())).unwrap();
    let b = e.extract(&clip(x.iter().map(|v| 2.0 * v).collect())).unwrap();
    let mut checked = 0;
    for (u, v) in a.values.iter().zip(b.values.iter()) {
        if *u > (1e-10f64).ln() + 1.0 {
            assert!((v - u - 4f64.ln()).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn log_mel_checks_shapes() {
    let fb = Array2::<f64>::ones((4, 10));
    assert!(log_mel(&Array2::zeros((3, 9)), &fb).is_err());
    let out = log_mel(&Array2::zeros((3, 10)), &fb).unwrap();
    assert!(out.iter().all(|&v| v == (1e-10f64).ln()));
}

#[test]
fn non_standard_hop_still_works() {
    let e = extractor(512);
    let mel = e.extract(&clip(vec![0.1; 160_000])).unwrap();
    assert_eq!(mel.values.nrows(), num_frames(160_000, 2048, 512).unwrap());
}

#[test]
fn wav_to_log_mel_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<f64> = sine(440.0, 3.0, 0.4).iter().zip(sine(3000.0, 3.0, 0.1)).map(|(a, b)| a + b).collect();
    for float in [false, true] {
        let path = dir.path().join(if float { "f.wav" } else { "i.wav" });
        write_wav(&path, &clip(samples.clone()), float).unwrap();
        let read = read_wav(&path).unwrap();
        assert_eq!(read.sample_rate, 16_000);
        assert_eq!(read.samples.len(), samples.len());
        let e = extractor(256);
        let once = encode_features(&path, &e.extract(&read).unwrap()).unwrap();
        let twice = encode_features(&path, &e.extract(&read_wav(&path).unwrap()).unwrap()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.len(), 16 + 618 * 128 * 4);
        let (values, fp) = decode_features(&path, &once).unwrap();
        assert_eq!(values.dim(), (618, 128));
        assert_eq!(fp, 0.016);
    }
}

#[test]
fn unsupported_wav_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, spec: hound::WavSpec| {
        let p = dir.path().join(name);
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..100 * spec.channels as usize {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        p
    };
    let base = hound::WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let stereo = write("stereo.wav", hound::WavSpec { channels: 2, ..base });
    assert!(read_wav(&stereo).is_err());
    let slow = write("slow.wav", hound::WavSpec { sample_rate: 8000, ..base });
    let slow_clip = read_wav(&slow).unwrap();
    assert!(extractor(256).extract(&slow_clip).is_err());
    assert!(read_wav(&dir.path().join("missing.wav")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stft_rows_match_frame_count(win_pow in 6u32..10, hop in 1usize..300, extra in 0usize..3000) {
        let window = 1usize << win_pow;
        let cfg = FeatureConfig { window, hop, n_mels: 8, ..FeatureConfig::default() };
        let e = Extractor::new(cfg).unwrap();
        let n = window + extra;
        let mag = e.stft_magnitude(&vec![0.25; n]).unwrap();
        prop_assert_eq!(mag.nrows(), num_frames(n, window, hop).unwrap());
        prop_assert_eq!(mag.ncols(), window / 2 + 1);
    }

    #[test]
    fn louder_audio_never_lowers_log_mel(seed in 0u64..1000, gain in 1.0f64..4.0) {
        let cfg = FeatureConfig { window: 256, hop: 128, n_mels: 16, clip_seconds: 0.1, ..FeatureConfig::default() };
        let e = Extractor::new(cfg).unwrap();
        let x: Vec<f64> = (0..1600).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0) - 0.5).collect();
        let a = e.extract(&clip(x.clone())).unwrap();
        let b = e.extract(&clip(x.iter().map(|v| v * gain).collect())).unwrap();
        for (u, v) in a.values.iter().zip(b.values.iter()) {
            prop_assert!(v >= u);
        }
    }
}
