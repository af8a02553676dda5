//! Encoder contracts and the deterministic toy encoders used for testing.
//!
//! Pretrained backbones plug in behind the same traits; the toy encoders are
//! seeded random linear maps so that synthetic datasets can plant structure
//! they are sensitive to.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{resample_rows, FeatureBundle};
use crate::error::{check_dim, Error, Result};
use crate::image::Image;
use crate::linalg::{self, Matrix};
use crate::rng::{self, salt};

/// Region-aware face encoder: one frame (plus optional face mask) to a d-vector.
pub trait FaceEncoder {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode_frame(&self, frame: &Image, mask: Option<&Image>) -> Result<Vec<f64>>;
}

/// Text encoder over fixed prompt tokens followed by learnable token vectors.
///
/// `learnable` is an `l × token_dim` matrix. `backward` returns the gradient
/// of a scalar with respect to `learnable`, given its gradient `grad_out`
/// with respect to the encoder output.
pub trait TextEncoder {
    fn dim(&self) -> usize;
    fn token_dim(&self) -> usize;
    fn tokenize(&self, text: &str) -> Vec<u32>;
    fn encode(&self, ids: &[u32], learnable: &Matrix) -> Result<Vec<f64>>;
    fn backward(&self, ids: &[u32], learnable: &Matrix, grad_out: &[f64]) -> Result<Matrix>;
}

/// Visual and audio front-ends of an audio-visual synchronisation backbone.
pub trait AvFrontEnd {
    fn raw_dim(&self) -> usize;
    /// Mouth-crop sequence to a `T × raw_dim` matrix.
    fn visual(&self, mouths: &[Image]) -> Result<Matrix>;
    /// Log-mel matrix (`T_a × n_mels`, one row per audio frame) to `T_a × raw_dim`.
    fn audio(&self, mel: &Matrix) -> Result<Matrix>;
}

/// Averages per-frame embeddings over the sequence, then L2-normalises.
pub fn encode_face_sequence<E: FaceEncoder + ?Sized>(
    encoder: &E,
    frames: &[Image],
    mask: Option<&Image>,
) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut sum = vec![0.0; encoder.dim()];
    for frame in frames {
        if let Some(m) = mask {
            check_dim("mask width", frame.width(), m.width())?;
            check_dim("mask height", frame.height(), m.height())?;
        }
        let e = encoder.encode_frame(frame, mask)?;
        check_dim("face embedding", encoder.dim(), e.len())?;
        linalg::axpy(1.0, &e, &mut sum);
    }
    linalg::scale(&mut sum, 1.0 / frames.len() as f64);
    linalg::normalized(&sum, "face semantic")
}

/// Seeded linear map of a box-downsampled, centred luma grid. With a mask,
/// every grid cell is weighted by the mean mask intensity over that cell.
#[derive(Debug, Clone)]
pub struct ToyFaceEncoder {
    name: String,
    grid: usize,
    weights: Matrix,
}

impl ToyFaceEncoder {
    pub fn new(seed: u64, dim: usize, grid: usize) -> Self {
        let mut r = rng::seeded(seed, salt::FACE_ENCODER);
        let inputs = grid * grid;
        Self {
            name: "toy-face".into(),
            grid,
            weights: rng::gaussian_matrix(&mut r, dim, inputs, 1.0 / linalg::sqrt(inputs as f64)),
        }
    }

    /// Wraps externally supplied weights (`dim × grid²`).
    pub fn from_weights(name: impl Into<String>, grid: usize, weights: Matrix) -> Result<Self> {
        check_dim("face encoder weights", grid * grid, weights.cols())?;
        Ok(Self { name: name.into(), grid, weights })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn grid(&self) -> usize {
        self.grid
    }
}

impl FaceEncoder for ToyFaceEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.weights.rows()
    }

    fn encode_frame(&self, frame: &Image, mask: Option<&Image>) -> Result<Vec<f64>> {
        let mut x: Vec<f64> = frame.luma_grid(self.grid).iter().map(|v| v - 0.5).collect();
        if let Some(m) = mask {
            check_dim("mask width", frame.width(), m.width())?;
            check_dim("mask height", frame.height(), m.height())?;
            for (xi, wi) in x.iter_mut().zip(m.luma_grid(self.grid)) {
                *xi *= wi;
            }
        }
        self.weights.matvec(&x)
    }
}

/// Bag-of-tokens text encoder: `out = P · tanh(mean(token vectors))`, where
/// fixed words index a seeded embedding table and the learnable vectors are
/// appended to the sequence.
#[derive(Debug, Clone)]
pub struct ToyTextEncoder {
    vocab: usize,
    table: Matrix,
    proj: Matrix,
}

impl ToyTextEncoder {
    pub const DEFAULT_VOCAB: usize = 4096;

    pub fn new(seed: u64, dim: usize, token_dim: usize) -> Self {
        let mut r = rng::seeded(seed, salt::TEXT_ENCODER);
        let vocab = Self::DEFAULT_VOCAB;
        let table = rng::gaussian_matrix(&mut r, vocab, token_dim, 1.0);
        let proj = rng::gaussian_matrix(&mut r, dim, token_dim, 1.0 / linalg::sqrt(token_dim as f64));
        Self { vocab, table, proj }
    }

    fn pooled(&self, ids: &[u32], learnable: &Matrix) -> Result<(Vec<f64>, usize)> {
        check_dim("learnable token width", self.token_dim(), learnable.cols())?;
        let count = ids.len() + learnable.rows();
        if count == 0 {
            return Err(Error::EmptySequence);
        }
        let mut mean = vec![0.0; self.token_dim()];
        for &id in ids {
            linalg::axpy(1.0, self.table.row(id as usize % self.vocab), &mut mean);
        }
        for row in learnable.iter_rows() {
            linalg::axpy(1.0, row, &mut mean);
        }
        linalg::scale(&mut mean, 1.0 / count as f64);
        Ok((mean, count))
    }
}

/// FNV-1a over the lowercase word.
fn word_hash(word: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in word.bytes() {
        h ^= b.to_ascii_lowercase() as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

impl TextEncoder for ToyTextEncoder {
    fn dim(&self) -> usize {
        self.proj.rows()
    }

    fn token_dim(&self) -> usize {
        self.table.cols()
    }

    fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| word_hash(w) % self.vocab as u32)
            .collect()
    }

    fn encode(&self, ids: &[u32], learnable: &Matrix) -> Result<Vec<f64>> {
        let (mean, _) = self.pooled(ids, learnable)?;
        let hidden: Vec<f64> = mean.iter().map(|&v| linalg::tanh(v)).collect();
        self.proj.matvec(&hidden)
    }

    fn backward(&self, ids: &[u32], learnable: &Matrix, grad_out: &[f64]) -> Result<Matrix> {
        let (mean, count) = self.pooled(ids, learnable)?;
        let grad_hidden = self.proj.matvec_t(grad_out)?;
        let grad_mean: Vec<f64> = grad_hidden
            .iter()
            .zip(&mean)
            .map(|(g, &m)| {
                let t = linalg::tanh(m);
                g * (1.0 - t * t) / count as f64
            })
            .collect();
        let mut grad = Matrix::zeros(learnable.rows(), learnable.cols());
        for i in 0..learnable.rows() {
            grad.row_mut(i).copy_from_slice(&grad_mean);
        }
        Ok(grad)
    }
}

/// Seeded linear front-ends: visual rows map the centred luma grid of each
/// mouth crop, audio rows map each log-mel frame after removing its mean
/// over mel bins.
#[derive(Debug, Clone)]
pub struct ToyAvFrontEnd {
    grid: usize,
    visual: Matrix,
    audio: Matrix,
}

impl ToyAvFrontEnd {
    pub fn new(seed: u64, raw_dim: usize, grid: usize, n_mels: usize) -> Self {
        let mut rv = rng::seeded(seed, salt::VISUAL_FRONTEND);
        let mut ra = rng::seeded(seed, salt::AUDIO_FRONTEND);
        let inputs = grid * grid;
        Self {
            grid,
            visual: rng::gaussian_matrix(&mut rv, raw_dim, inputs, 1.0 / linalg::sqrt(inputs as f64)),
            audio: rng::gaussian_matrix(&mut ra, raw_dim, n_mels, 1.0 / linalg::sqrt(n_mels as f64)),
        }
    }

    pub fn from_weights(grid: usize, visual: Matrix, audio: Matrix) -> Result<Self> {
        check_dim("visual front-end inputs", grid * grid, visual.cols())?;
        check_dim("front-end widths", visual.rows(), audio.rows())?;
        Ok(Self { grid, visual, audio })
    }

    pub fn n_mels(&self) -> usize {
        self.audio.cols()
    }
}

impl AvFrontEnd for ToyAvFrontEnd {
    fn raw_dim(&self) -> usize {
        self.visual.rows()
    }

    fn visual(&self, mouths: &[Image]) -> Result<Matrix> {
        if mouths.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut out = Matrix::zeros(mouths.len(), self.raw_dim());
        for (t, m) in mouths.iter().enumerate() {
            let x: Vec<f64> = m.luma_grid(self.grid).iter().map(|v| v - 0.5).collect();
            let row = self.visual.matvec(&x)?;
            out.row_mut(t).copy_from_slice(&row);
        }
        Ok(out)
    }

    fn audio(&self, mel: &Matrix) -> Result<Matrix> {
        if mel.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        check_dim("mel bins", self.audio.cols(), mel.cols())?;
        let mut out = Matrix::zeros(mel.rows(), self.raw_dim());
        for t in 0..mel.rows() {
            let col = mel.row(t);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let centred: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let row = self.audio.matvec(&centred)?;
            out.row_mut(t).copy_from_slice(&row);
        }
        Ok(out)
    }
}

/// Trainable linear map from raw front-end width to the shared width `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weight: Matrix,
}

impl Projection {
    pub fn new(weight: Matrix) -> Self {
        Self { weight }
    }

    pub fn identity(d: usize) -> Self {
        Self::new(Matrix::identity(d))
    }

    pub fn seeded(seed: u64, salt: u64, out_dim: usize, in_dim: usize) -> Self {
        let mut r = rng::seeded(seed, salt);
        Self::new(rng::gaussian_matrix(&mut r, out_dim, in_dim, 1.0 / linalg::sqrt(in_dim as f64)))
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, rows: &Matrix) -> Result<Matrix> {
        self.weight.apply_rows(rows)
    }
}

/// Raw (pre-projection) clip features. Front-ends are frozen during training,
/// so these are computed once per clip and reused every epoch. Audio rows are
/// already pooled to the video frame count.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClip {
    pub face: Vec<f64>,
    pub visual: Matrix,
    pub audio: Matrix,
}

impl RawClip {
    /// Pools `audio_rows` (one per audio frame) onto the `visual` frame grid.
    pub fn new(face: Vec<f64>, visual: Matrix, audio_rows: &Matrix) -> Result<Self> {
        check_dim("front-end widths", visual.cols(), audio_rows.cols())?;
        let audio = resample_rows(audio_rows, visual.rows())?;
        Ok(Self { face, visual, audio })
    }

    pub fn frames(&self) -> usize {
        self.visual.rows()
    }

    pub fn project(&self, visual: &Projection, audio: &Projection) -> Result<FeatureBundle> {
        FeatureBundle::new(self.face.clone(), visual.apply(&self.visual)?, audio.apply(&self.audio)?)
    }
}
