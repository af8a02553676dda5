use std::collections::BTreeMap;
use std::path::Path;

use avfd::config::RunConfig;
use avfd::features::{self, Encoders};
use avfd::media::{self, Waveform};
use avfd::mel::{self, MelConfig};
use avfd::synth::{self, SynthConfig};
use avfd::{corrupt, manifest, Error};
use avfd_core::data::{resample_rows, AudioRef, DatasetManifest, Label, SampleRecord, Scenario, Split};
use avfd_core::encoders::{AvFrontEnd, Projection};
use avfd_core::image::Image;
use avfd_core::perturb::Corruption;

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_overrides(&["dim=8", "raw_dim=8", "token_dim=4", "hidden=4"]).unwrap();
    c
}

fn frame(seed: u8, channels: usize) -> Image {
    let data = (0..16 * 16 * channels).map(|i| (i as u8).wrapping_mul(seed).wrapping_add(seed)).collect();
    Image::new(16, 16, channels, data).unwrap()
}

/// Writes a hand-made dataset of `n` real clips with `t` frames and `audio_len` samples each.
fn tiny_dataset(root: &Path, n: usize, t: usize, audio_len: usize) -> DatasetManifest {
    let mut records = Vec::new();
    for i in 0..n {
        let id = format!("clip{i}");
        let mut frame_refs = Vec::new();
        let mut mouth_refs = Vec::new();
        for k in 0..t {
            let (f, m) = (format!("{id}/f{k}.png"), format!("{id}/m{k}.png"));
            media::write_png(&root.join(&f), &frame((i * t + k) as u8 + 1, 3)).unwrap();
            media::write_png(&root.join(&m), &frame((i * t + k) as u8 + 7, 1)).unwrap();
            frame_refs.push(f);
            mouth_refs.push(m);
        }
        let a = format!("{id}/audio.wav");
        let samples = (0..audio_len).map(|s| (0.01 * (s + i) as f64).sin() * 0.3).collect();
        media::write_wav(&root.join(&a), &Waveform { samples, sample_rate: 16_000 }).unwrap();
        records.push(SampleRecord {
            id,
            frame_refs,
            mouth_refs,
            audio_ref: AudioRef { path: a, sample_rate: 16_000 },
            mask_ref: None,
            label: Label::Real,
            scenario: Scenario::Talking,
            split: Split::Train,
        });
    }
    let m = DatasetManifest { name: "tiny".into(), version: "1".into(), metadata: BTreeMap::new(), records };
    manifest::save(&root.join("manifest.txt"), &m).unwrap();
    m
}

#[test]
fn sine_energy_peaks_in_the_bin_around_440_hz() {
    let sr = 16_000;
    let samples: Vec<f64> =
        (0..sr).map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin()).collect();
    let m = mel::mel_spectrogram(&samples, sr, MelConfig::default()).unwrap();
    let energy: Vec<f64> = (0..m.cols()).map(|b| m.iter_rows().map(|r| r[b].exp()).sum()).collect();
    let got = (0..energy.len()).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();

    let to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let to_hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = to_mel(sr as f64 / 2.0);
    let edges: Vec<f64> = (0..82).map(|i| to_hz(top * i as f64 / 81.0)).collect();
    let response = |b: usize| {
        let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        ((440.0 - lo) / (c - lo)).min((hi - 440.0) / (hi - c)).max(0.0)
    };
    let want = (0..80).max_by(|&a, &b| response(a).total_cmp(&response(b))).unwrap();
    assert_eq!(got, want);
    assert!(edges[want] < 440.0 && 440.0 < edges[want + 2]);
}

#[test]
fn two_hundred_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n: 200, seed: 3, ..Default::default() };
    let written = synth::generate(&cfg, dir.path()).unwrap();
    let path = dir.path().join("manifest.txt");
    let read = manifest::load(&path).unwrap();
    assert_eq!(read.records.len(), 200);
    assert_eq!(read, written);
    assert_eq!(manifest::to_string(&read), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn identity_projections_keep_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_dataset(dir.path(), 1, 3, 2000);
    let enc = Encoders::build(&small_config()).unwrap();
    let raw = features::extract_raw(&m.records[0], dir.path(), &enc, None).unwrap();
    let id = Projection::identity(8);
    let b = features::extract_features(&m.records[0], dir.path(), &enc, &id, &id).unwrap();
    assert_eq!(b.visual(), &raw.visual);
    assert_eq!(b.audio(), &raw.audio);
    assert_eq!(b.face(), raw.face.as_slice());
}

#[test]
fn audio_rows_pool_pairwise_onto_frames() {
    let dir = tempfile::tempdir().unwrap();
    // 400-sample window and 160-sample hop: 1520 samples give 8 mel frames.
    let m = tiny_dataset(dir.path(), 1, 4, 1520);
    let enc = Encoders::build(&small_config()).unwrap();
    let raw = features::extract_raw(&m.records[0], dir.path(), &enc, None).unwrap();
    let wave = media::read_wav(&dir.path().join("clip0/audio.wav")).unwrap();
    let mel = mel::mel_spectrogram(&wave.samples, 16_000, enc.mel).unwrap();
    assert_eq!(mel.rows(), 8);
    let rows = enc.av.audio(&mel).unwrap();
    for t in 0..4 {
        for j in 0..8 {
            let want = 0.5 * (rows.get(2 * t, j) + rows.get(2 * t + 1, j));
            assert!((raw.audio.get(t, j) - want).abs() < 1e-12);
        }
    }
    assert_eq!(resample_rows(&rows, 4).unwrap(), raw.audio);
}

#[test]
fn missing_frame_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_dataset(dir.path(), 1, 2, 2000);
    std::fs::remove_file(dir.path().join("clip0/f1.png")).unwrap();
    let enc = Encoders::build(&small_config()).unwrap();
    let err = features::extract_raw(&m.records[0], dir.path(), &enc, None).unwrap_err();
    assert!(matches!(err, Error::Io { .. } | Error::Media { .. }));
    assert!(err.to_string().contains("f1.png"), "{err}");
}

fn frames_of(root: &Path) -> Vec<Vec<u8>> {
    let m = manifest::load(&root.join("manifest.txt")).unwrap();
    m.records
        .iter()
        .flat_map(|r| r.frame_refs.iter().chain(&r.mouth_refs))
        .map(|f| media::read_image(&manifest::resolve(root, f)).unwrap().into_bytes())
        .collect()
}

#[test]
fn invert_twice_restores_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    tiny_dataset(&src, 2, 3, 2000);
    let once = dir.path().join("once");
    let twice = dir.path().join("twice");
    corrupt::corrupt_dataset(&src.join("manifest.txt"), &Corruption::Invert, &once).unwrap();
    corrupt::corrupt_dataset(&once.join("manifest.txt"), &Corruption::Invert, &twice).unwrap();
    assert_eq!(frames_of(&twice), frames_of(&src));
    assert_ne!(frames_of(&once), frames_of(&src));
}

#[test]
fn seeded_noise_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    tiny_dataset(&src, 2, 2, 2000);
    let spec: Corruption = "noise:sigma=25,seed=7".parse().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    corrupt::corrupt_dataset(&src.join("manifest.txt"), &spec, &a).unwrap();
    corrupt::corrupt_dataset(&src.join("manifest.txt"), &spec, &b).unwrap();
    assert_eq!(frames_of(&a), frames_of(&b));
    assert_ne!(frames_of(&a), frames_of(&src));
}

#[test]
fn ten_samples_keep_count_audio_and_source() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    tiny_dataset(&src, 10, 2, 2000);
    let before = std::fs::read(src.join("manifest.txt")).unwrap();
    let frames_before = frames_of(&src);
    let out = dir.path().join("out");
    let m = corrupt::corrupt_dataset(&src.join("manifest.txt"), &"blur".parse().unwrap(), &out).unwrap();
    assert_eq!(m.records.len(), 10);
    assert_eq!(m.metadata["corruption"], "blur:ksize=5");
    assert_eq!(m.metadata["corrupted_from"], "tiny 1");
    assert_eq!(manifest::load(&out.join("manifest.txt")).unwrap(), m);
    for (r, o) in manifest::load(&src.join("manifest.txt")).unwrap().records.iter().zip(&m.records) {
        let a = std::fs::read(src.join(&r.audio_ref.path)).unwrap();
        assert_eq!(std::fs::read(out.join(&o.audio_ref.path)).unwrap(), a);
    }
    assert_eq!(std::fs::read(src.join("manifest.txt")).unwrap(), before);
    assert_eq!(frames_of(&src), frames_before);
}

#[test]
fn synth_is_balanced_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n: 200, seed: 11, ..Default::default() };
    let a = synth::generate(&cfg, &dir.path().join("a")).unwrap();
    let b = synth::generate(&cfg, &dir.path().join("b")).unwrap();
    assert_eq!(a.records.iter().filter(|r| r.label == Label::Real).count(), 100);
    assert_eq!(a.records.iter().filter(|r| r.label == Label::Fake).count(), 100);
    assert_eq!(a, b);
    assert_eq!(frames_of(&dir.path().join("a")), frames_of(&dir.path().join("b")));
    let wav = |d: &str| std::fs::read(dir.path().join(d).join("real-0003/audio.wav")).unwrap();
    assert_eq!(wav("a"), wav("b"));
}

#[test]
fn synth_with_no_clips_writes_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth::generate(&SynthConfig { n: 0, ..Default::default() }, dir.path()).unwrap();
    assert!(m.records.is_empty());
    assert!(manifest::load(&dir.path().join("manifest.txt")).unwrap().records.is_empty());
}

#[test]
fn real_clips_are_diagonal_dominant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { n: 40, seed: 5, ..Default::default() };
    let m = synth::generate(&cfg, dir.path()).unwrap();
    let (mut hits, mut rows) = (0.0, 0usize);
    for r in m.records.iter().filter(|r| r.label == Label::Real) {
        let (v, a) = synth::decode_classes(&cfg, r, dir.path()).unwrap();
        let phi = synth::code_alignment(&v, &a);
        hits += synth::diagonal_argmax_fraction(&phi) * phi.rows() as f64;
        rows += phi.rows();
    }
    assert!(hits / rows as f64 >= 0.95, "diagonal fraction {}", hits / rows as f64);
    for r in m.records.iter().filter(|r| r.label == Label::Fake) {
        let (v, a) = synth::decode_classes(&cfg, r, dir.path()).unwrap();
        assert_eq!(synth::diagonal_argmax_fraction(&synth::code_alignment(&v, &a)), 0.0);
    }
}
