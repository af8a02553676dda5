//! Synthetic audio-visual clips with planted lip-sync structure.
//!
//! Each clip shows a random sequence of mouth shapes, one per frame, drawn
//! without repetition from `classes` prototypes (a bright blob at one of the
//! cells of a square grid). Real clips play, during each frame, a tone whose
//! pitch sits at the centre of the mel band assigned to the frame's shape.
//! Fake clips use a derangement of the tone sequence, so no frame hears its
//! own shape, and their faces come from a different prototype.

use std::collections::BTreeMap;
use std::path::Path;

use avfd_core::data::{AudioRef, DatasetManifest, Label, SampleRecord, Scenario, Split};
use avfd_core::image::Image;
use avfd_core::linalg::{self, Matrix};
use avfd_core::rng::{self, Rng};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::manifest;
use crate::media::{self, Waveform};
use crate::mel::{self, MelConfig, MelSpectrogram};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub frames: usize,
    pub size: usize,
    pub fps: u32,
    pub sample_rate: u32,
    pub classes: usize,
    /// `None` puts reals in train and fakes in test.
    pub split: Option<Split>,
    pub scenario: Scenario,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            seed: 0,
            frames: 16,
            size: 32,
            fps: 25,
            sample_rate: 16_000,
            classes: 16,
            split: None,
            scenario: Scenario::Talking,
        }
    }
}

const MEL_BASE: usize = 8;
const MEL_STEP: usize = 4;
const FACE_SALT: u64 = 0xFACE;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid();
        if self.frames == 0 || self.size < 8 || self.fps == 0 || self.sample_rate == 0 {
            return Err(Error::Config("frames, fps and sample_rate must be positive and size at least 8".into()));
        }
        if self.classes < self.frames.max(2) || grid * grid < self.classes {
            return Err(Error::Config(format!(
                "need at least {} mouth classes, and at most a full grid",
                self.frames.max(2)
            )));
        }
        if MEL_BASE + MEL_STEP * (self.classes - 1) >= MelConfig::default().n_mels {
            return Err(Error::Config("too many classes for the mel band layout".into()));
        }
        if self.split == Some(Split::Train) && self.n >= 2 {
            return Err(Error::Config("fake clips cannot be placed in the train split".into()));
        }
        Ok(())
    }

    fn grid(&self) -> usize {
        (self.classes as f64).sqrt().ceil() as usize
    }

    pub fn samples_per_frame(&self) -> usize {
        (self.sample_rate / self.fps) as usize
    }

    /// Mel band carrying class `k`'s tone.
    pub fn tone_band(k: usize) -> usize {
        MEL_BASE + MEL_STEP * k
    }

    pub fn tone_hz(&self, k: usize) -> f64 {
        mel::mel_edges(MelConfig::default().n_mels, self.sample_rate)[Self::tone_band(k) + 1]
    }
}

/// Noise-free mouth prototype for class `k`.
pub fn mouth_prototype(cfg: &SynthConfig, k: usize) -> Vec<f64> {
    let g = cfg.grid();
    let cell = cfg.size as f64 / g as f64;
    let (cx, cy) = (((k % g) as f64 + 0.5) * cell, ((k / g) as f64 + 0.5) * cell);
    let s = cell * 0.4;
    let mut out = Vec::with_capacity(cfg.size * cfg.size);
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
            out.push(30.0 + 200.0 * (-d2 / (2.0 * s * s)).exp());
        }
    }
    out
}

fn to_image(w: usize, h: usize, ch: usize, values: &[f64]) -> Image {
    let data = values.iter().map(|v| linalg::round_half_away(*v).clamp(0.0, 255.0) as u8).collect();
    Image::new(w, h, ch, data).expect("non-empty image")
}

/// Smooth RGB face prototype: a sum of seeded Gaussian bumps.
fn face_prototype(cfg: &SynthConfig, label: Label) -> Vec<f64> {
    let mut r = rng::seeded(label as u64, FACE_SALT);
    let n = cfg.size;
    let bumps: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                r.random_range(0.15..0.85) * n as f64,
                r.random_range(0.15..0.85) * n as f64,
                r.random_range(0.08..0.2) * n as f64,
                [r.random_range(-90.0..90.0), r.random_range(-90.0..90.0), r.random_range(-90.0..90.0)],
            )
        })
        .collect();
    let mut out = vec![128.0; n * n * 3];
    for y in 0..n {
        for x in 0..n {
            for &(bx, by, s, amp) in &bumps {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                let w = (-d2 / (2.0 * s * s)).exp();
                for c in 0..3 {
                    out[(y * n + x) * 3 + c] += amp[c] * w;
                }
            }
        }
    }
    out
}

fn derangement(r: &mut Rng, n: usize) -> Vec<usize> {
    if n < 2 {
        return (0..n).collect();
    }
    loop {
        let p = rng::permutation(r, n);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Per-clip content: the shape class shown and the tone class heard in each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPlan {
    pub id: String,
    pub label: Label,
    pub visual: Vec<usize>,
    pub audio: Vec<usize>,
}

pub fn plan(cfg: &SynthConfig) -> Vec<ClipPlan> {
    let reals = cfg.n - cfg.n / 2;
    (0..cfg.n)
        .map(|i| {
            let (label, j) = if i < reals { (Label::Real, i) } else { (Label::Fake, i - reals) };
            let mut r = rng::seeded(cfg.seed, 1000 + i as u64);
            let visual: Vec<usize> = rng::permutation(&mut r, cfg.classes)[..cfg.frames].to_vec();
            let audio = match label {
                Label::Real => visual.clone(),
                Label::Fake => derangement(&mut r, cfg.frames).iter().map(|&k| visual[k]).collect(),
            };
            ClipPlan { id: format!("{label}-{j:04}"), label, visual, audio }
        })
        .collect()
}

fn render(cfg: &SynthConfig, clip: &ClipPlan, clip_index: u64, root: &Path) -> Result<SampleRecord> {
    let mut r = rng::seeded(cfg.seed, 500_000 + clip_index);
    let face = face_prototype(cfg, clip.label);
    let offset: Vec<f64> = (0..3).map(|_| rng::gaussian(&mut r, 6.0)).collect();
    let mut frame_refs = Vec::with_capacity(cfg.frames);
    let mut mouth_refs = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let f: Vec<f64> =
            face.iter().enumerate().map(|(i, v)| v + offset[i % 3] + rng::gaussian(&mut r, 3.0)).collect();
        let m: Vec<f64> = mouth_prototype(cfg, clip.visual[t]).iter().map(|v| v + rng::gaussian(&mut r, 4.0)).collect();
        let fr = format!("{}/frame_{t:04}.png", clip.id);
        let mr = format!("{}/mouth_{t:04}.png", clip.id);
        media::write_png(&root.join(&fr), &to_image(cfg.size, cfg.size, 3, &f))?;
        media::write_png(&root.join(&mr), &to_image(cfg.size, cfg.size, 1, &m))?;
        frame_refs.push(fr);
        mouth_refs.push(mr);
    }
    let spf = cfg.samples_per_frame();
    let mut samples = Vec::with_capacity(spf * cfg.frames);
    for &k in &clip.audio {
        let hz = cfg.tone_hz(k);
        let phase = r.random_range(0.0..std::f64::consts::TAU);
        for i in 0..spf {
            let t = i as f64 / cfg.sample_rate as f64;
            samples.push(0.5 * (std::f64::consts::TAU * hz * t + phase).sin() + rng::gaussian(&mut r, 0.005));
        }
    }
    let ar = format!("{}/audio.wav", clip.id);
    media::write_wav(&root.join(&ar), &Waveform { samples, sample_rate: cfg.sample_rate })?;
    Ok(SampleRecord {
        id: clip.id.clone(),
        frame_refs,
        mouth_refs,
        audio_ref: AudioRef { path: ar, sample_rate: cfg.sample_rate },
        mask_ref: None,
        label: clip.label,
        scenario: cfg.scenario,
        split: cfg.split.unwrap_or(match clip.label {
            Label::Real => Split::Train,
            Label::Fake => Split::Test,
        }),
    })
}

/// Writes the dataset under `out_dir` with its manifest at `out_dir/manifest.txt`.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let records =
        plan(cfg).iter().enumerate().map(|(i, c)| render(cfg, c, i as u64, out_dir)).collect::<Result<Vec<_>>>()?;
    let metadata = BTreeMap::from([
        ("generator".to_string(), "avfd synth".to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("fps".to_string(), cfg.fps.to_string()),
        ("sample_rate".to_string(), cfg.sample_rate.to_string()),
        ("frames".to_string(), cfg.frames.to_string()),
        ("classes".to_string(), cfg.classes.to_string()),
        ("size".to_string(), cfg.size.to_string()),
    ]);
    let m = DatasetManifest { name: format!("synth-{}", cfg.seed), version: "1".into(), metadata, records };
    manifest::save(&out_dir.join("manifest.txt"), &m)?;
    Ok(m)
}

/// Recovers the per-frame shape and tone classes of a written clip: shapes
/// by nearest prototype, tones by the strongest tone band after pooling the
/// mel frames onto the video frames.
pub fn decode_classes(cfg: &SynthConfig, record: &SampleRecord, root: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let protos: Vec<Vec<f64>> = (0..cfg.classes).map(|k| mouth_prototype(cfg, k)).collect();
    let mut visual = Vec::with_capacity(record.frames());
    for m in &record.mouth_refs {
        let img = media::read_image(&manifest::resolve(root, m))?;
        let px: Vec<f64> = img.luma().iter().map(|v| v * 255.0).collect();
        let dist = |p: &Vec<f64>| p.iter().zip(&px).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        visual.push(argmin(protos.iter().map(dist)));
    }
    let wave = media::read_wav(&manifest::resolve(root, &record.audio_ref.path))?;
    let mel = MelSpectrogram::new(MelConfig::default(), wave.sample_rate)?.compute(&wave.samples)?;
    let pooled = avfd_core::data::resample_rows(&mel, record.frames())?;
    let audio =
        pooled.iter_rows().map(|row| argmin((0..cfg.classes).map(|k| -row[SynthConfig::tone_band(k)]))).collect();
    Ok((visual, audio))
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best }).0
}

/// Code-level alignment matrix: `Φ_tk = 1` when frame `t`'s shape matches frame `k`'s tone.
pub fn code_alignment(visual: &[usize], audio: &[usize]) -> Matrix {
    let mut phi = Matrix::zeros(visual.len(), audio.len());
    for (t, v) in visual.iter().enumerate() {
        for (k, a) in audio.iter().enumerate() {
            if v == a {
                phi.set(t, k, 1.0);
            }
        }
    }
    phi
}

/// Fraction of rows whose strict maximum sits on the diagonal.
pub fn diagonal_argmax_fraction(phi: &Matrix) -> f64 {
    let hits = (0..phi.rows())
        .filter(|&t| {
            let row = phi.row(t);
            (0..row.len()).all(|k| k == t || row[k] < row[t])
        })
        .count();
    hits as f64 / phi.rows().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_counts_and_derangement() {
        let cfg = SynthConfig { n: 10, ..Default::default() };
        let p = plan(&cfg);
        assert_eq!(p.iter().filter(|c| c.label == Label::Real).count(), 5);
        for c in &p {
            let mut seen = c.visual.clone();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), cfg.frames);
            match c.label {
                Label::Real => assert_eq!(c.visual, c.audio),
                Label::Fake => assert!(c.visual.iter().zip(&c.audio).all(|(a, b)| a != b)),
            }
        }
        assert_eq!(p, plan(&cfg));
    }

    #[test]
    fn tones_sit_in_distinct_bands() {
        let cfg = SynthConfig::default();
        let edges = mel::mel_edges(80, cfg.sample_rate);
        for k in 0..cfg.classes {
            let b = SynthConfig::tone_band(k);
            let hz = cfg.tone_hz(k);
            assert!(edges[b] < hz && hz < edges[b + 2]);
        }
    }

    #[test]
    fn train_split_with_fakes_rejected() {
        let cfg = SynthConfig { n: 4, split: Some(Split::Train), ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
