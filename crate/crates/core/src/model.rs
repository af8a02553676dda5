//! The detector's trainable state, its training objective and clip scoring.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoders::{Projection, RawClip, TextEncoder};
use crate::error::{check_dim, Error, Result};
use crate::evaluation::aggregate_video_score;
use crate::fapl::{self, PolarityEmbeddings, PromptHierarchy};
use crate::linalg::Matrix;
use crate::mmdwl::{self, ModulationVector, WeightGenerator};
use crate::rng::salt;

/// Architecture and loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Shared embedding width `d`.
    pub dim: usize,
    /// Front-end output width before projection.
    pub raw_dim: usize,
    pub token_dim: usize,
    pub tokens_per_prompt: usize,
    pub hidden: usize,
    pub tau: f64,
    pub tau_av: f64,
    pub window: usize,
    pub alpha: ModulationVector,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            raw_dim: 128,
            token_dim: 64,
            tokens_per_prompt: fapl::DEFAULT_TOKENS_PER_PROMPT,
            hidden: mmdwl::DEFAULT_HIDDEN,
            tau: fapl::DEFAULT_TAU,
            tau_av: mmdwl::DEFAULT_TAU_AV,
            window: mmdwl::DEFAULT_WINDOW,
            alpha: ModulationVector::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.raw_dim == 0 || self.token_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite() && self.tau_av > 0.0 && self.tau_av.is_finite()) {
            return Err(Error::InvalidConfig("temperatures must be positive".into()));
        }
        if self.alpha.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Coefficients of the alignment and contrastive terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub av: f64,
    pub ft: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { av: 1.0, ft: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub av: f64,
    pub ft: f64,
}

/// Every trainable block: learnable prompt tokens, the shared polarity
/// projection `W`, the visual/audio projections and the weight generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub config: ModelConfig,
    pub prompts: PromptHierarchy,
    pub polarity: Matrix,
    pub visual_proj: Projection,
    pub audio_proj: Projection,
    pub weight_gen: WeightGenerator,
}

impl Detector {
    pub fn new(config: ModelConfig, positives: Vec<String>, negatives: Vec<String>, seed: u64) -> Result<Self> {
        config.validate()?;
        if positives.is_empty() {
            return Err(Error::EmptyPolarity("positive"));
        }
        if negatives.is_empty() {
            return Err(Error::EmptyPolarity("negative"));
        }
        Ok(Self {
            prompts: PromptHierarchy::new(positives, negatives, config.token_dim, config.tokens_per_prompt, seed),
            polarity: fapl::init_polarity_projection(config.dim, seed),
            visual_proj: Projection::seeded(seed, salt::VISUAL_PROJECTION, config.dim, config.raw_dim),
            audio_proj: Projection::seeded(seed, salt::AUDIO_PROJECTION, config.dim, config.raw_dim),
            weight_gen: WeightGenerator::new(seed, config.dim, config.hidden),
            config,
        })
    }

    pub fn with_default_prompts(config: ModelConfig, seed: u64) -> Result<Self> {
        let s = |v: &[&str]| v.iter().map(|x| String::from(*x)).collect();
        Self::new(config, s(&fapl::DEFAULT_POSITIVE_PROMPTS), s(&fapl::DEFAULT_NEGATIVE_PROMPTS), seed)
    }

    pub fn polarity_embeddings<T: TextEncoder + ?Sized>(&self, text: &T) -> Result<PolarityEmbeddings> {
        fapl::encode_polarity(&self.prompts, text, &self.polarity, self.config.tau)
    }

    /// Named views of every parameter block, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, t) in self.prompts.positive_tokens().iter().enumerate() {
            out.push((format!("tokens.pos.{i}"), t.as_slice()));
        }
        for (i, t) in self.prompts.negative_tokens().iter().enumerate() {
            out.push((format!("tokens.neg.{i}"), t.as_slice()));
        }
        out.push(("polarity".into(), self.polarity.as_slice()));
        out.push(("proj.visual".into(), self.visual_proj.weight.as_slice()));
        out.push(("proj.audio".into(), self.audio_proj.weight.as_slice()));
        out.push(("wgen.w1".into(), self.weight_gen.w1.as_slice()));
        out.push(("wgen.b1".into(), &self.weight_gen.b1));
        out.push(("wgen.w2".into(), self.weight_gen.w2.as_slice()));
        out.push(("wgen.b2".into(), &self.weight_gen.b2));
        out
    }

    /// Mutable views in the same order as [`Detector::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.prompts.token_blocks_mut().map(|m| m.as_mut_slice()).collect();
        out.push(self.polarity.as_mut_slice());
        out.push(self.visual_proj.weight.as_mut_slice());
        out.push(self.audio_proj.weight.as_mut_slice());
        out.push(self.weight_gen.w1.as_mut_slice());
        out.push(&mut self.weight_gen.b1);
        out.push(self.weight_gen.w2.as_mut_slice());
        out.push(&mut self.weight_gen.b2);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn check_clip(&self, clip: &RawClip) -> Result<()> {
        check_dim("face width", self.config.dim, clip.face.len())?;
        check_dim("visual raw width", self.config.raw_dim, clip.visual.cols())?;
        check_dim("audio raw width", self.config.raw_dim, clip.audio.cols())?;
        check_dim("audio frames", clip.visual.rows(), clip.audio.rows())?;
        if clip.frames() == 0 {
            return Err(Error::EmptySequence);
        }
        Ok(())
    }

    /// `L = c_av·L_av + c_ft·L_ft` over a batch: `L_av` is the mean of each
    /// clip's own alignment loss, `L_ft` runs over the batch of face vectors.
    pub fn total_loss<T: TextEncoder + ?Sized>(
        &self,
        batch: &[RawClip],
        text: &T,
        weights: LossWeights,
    ) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut av = 0.0;
        for clip in batch {
            self.check_clip(clip)?;
            let b = clip.project(&self.visual_proj, &self.audio_proj)?;
            let phi = mmdwl::alignment_matrix(b.visual(), b.audio(), self.config.tau_av, self.config.window)?;
            av += mmdwl::av_alignment_loss(&phi);
        }
        av /= batch.len() as f64;
        let emb = self.polarity_embeddings(text)?;
        let faces: Vec<&[f64]> = batch.iter().map(|c| c.face.as_slice()).collect();
        let ft = fapl::ftca_loss(&faces, &emb)?;
        Ok(LossBreakdown { total: weights.av * av + weights.ft * ft, av, ft })
    }

    /// Loss and gradient for every block in [`Detector::blocks`] order. The
    /// weight generator does not enter the objective, so its gradient is zero.
    pub fn loss_and_grad<T: TextEncoder + ?Sized>(
        &self,
        batch: &[RawClip],
        text: &T,
        weights: LossWeights,
    ) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut av = 0.0;
        let mut grad_vp = Matrix::zeros(self.config.dim, self.config.raw_dim);
        let mut grad_ap = Matrix::zeros(self.config.dim, self.config.raw_dim);
        for clip in batch {
            self.check_clip(clip)?;
            let v = self.visual_proj.apply(&clip.visual)?;
            let a = self.audio_proj.apply(&clip.audio)?;
            let (loss, gv, ga) = mmdwl::alignment_loss_and_grad(&v, &a, self.config.tau_av, self.config.window)?;
            av += loss * scale;
            for t in 0..clip.frames() {
                grad_vp.add_outer(weights.av * scale, gv.row(t), clip.visual.row(t));
                grad_ap.add_outer(weights.av * scale, ga.row(t), clip.audio.row(t));
            }
        }
        let faces: Vec<&[f64]> = batch.iter().map(|c| c.face.as_slice()).collect();
        let (ft, fg) = fapl::ftca_loss_and_grad(&faces, &self.prompts, text, &self.polarity, self.config.tau)?;

        let mut grads: Vec<Vec<f64>> = Vec::new();
        let mut push_scaled = |m: &[f64], s: f64| grads.push(m.iter().map(|g| g * s).collect());
        for t in fg.positive_tokens.iter().chain(&fg.negative_tokens) {
            push_scaled(t.as_slice(), weights.ft);
        }
        push_scaled(fg.projection.as_slice(), weights.ft);
        grads.push(grad_vp.into_vec());
        grads.push(grad_ap.into_vec());
        grads.push(alloc::vec![0.0; self.weight_gen.w1.as_slice().len()]);
        grads.push(alloc::vec![0.0; self.weight_gen.b1.len()]);
        grads.push(alloc::vec![0.0; self.weight_gen.w2.as_slice().len()]);
        grads.push(alloc::vec![0.0; self.weight_gen.b2.len()]);

        let breakdown = LossBreakdown { total: weights.av * av + weights.ft * ft, av, ft };
        Ok((breakdown, grads))
    }

    /// Freezes the polarity embeddings for scoring many clips.
    pub fn scorer<T: TextEncoder + ?Sized>(&self, text: &T) -> Result<Scorer<'_>> {
        Ok(Scorer { detector: self, emb: self.polarity_embeddings(text)? })
    }
}

/// Scores for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipScore {
    pub frame_scores: Vec<f64>,
    pub video_score: f64,
    /// Generated weights `ŵ` before modulation.
    pub raw_weights: [f64; 3],
    /// Modulated weights `w`.
    pub weights: [f64; 3],
    /// Channel values `(u_fp, mean r_t, mean c_t)`.
    pub channels: [f64; 3],
}

impl ClipScore {
    /// Weighted channel means, the per-clip feature used by the shift diagnostics.
    pub fn fused_features(&self) -> [f64; 3] {
        [self.weights[0] * self.channels[0], self.weights[1] * self.channels[1], self.weights[2] * self.channels[2]]
    }
}

pub struct Scorer<'a> {
    detector: &'a Detector,
    emb: PolarityEmbeddings,
}

impl Scorer<'_> {
    pub fn embeddings(&self) -> &PolarityEmbeddings {
        &self.emb
    }

    pub fn score(&self, clip: &RawClip) -> Result<ClipScore> {
        let det = self.detector;
        det.check_clip(clip)?;
        let bundle = clip.project(&det.visual_proj, &det.audio_proj)?;
        let phi = mmdwl::alignment_matrix(bundle.visual(), bundle.audio(), det.config.tau_av, det.config.window)?;
        let u_fp = fapl::facial_anomaly(bundle.face(), &self.emb)?;
        let fp = fapl::build_pattern(bundle.face(), &self.emb)?;
        let raw_weights = mmdwl::generate_weights(
            &det.weight_gen,
            fp.as_slice(),
            &bundle.visual().column_mean(),
            &bundle.audio().column_mean(),
        )?;
        let weights = mmdwl::modulate(raw_weights, det.config.alpha)?;
        let (r, c) = mmdwl::channel_scores(&phi);
        let frame_scores = mmdwl::combine_channels(u_fp, &r, &c, weights);
        let video_score = aggregate_video_score(&frame_scores)?;
        if !video_score.is_finite() {
            return Err(Error::NonFinite("video score".into()));
        }
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        Ok(ClipScore { video_score, raw_weights, weights, channels: [u_fp, mean(&r), mean(&c)], frame_scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ToyTextEncoder;
    use crate::linalg;
    use crate::rng;

    fn small() -> ModelConfig {
        ModelConfig {
            dim: 8,
            raw_dim: 5,
            token_dim: 6,
            tokens_per_prompt: 2,
            hidden: 7,
            window: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn crafted_micro_batch_sums_closed_forms() {
        let cfg = ModelConfig {
            dim: 2,
            raw_dim: 2,
            token_dim: 4,
            tokens_per_prompt: 2,
            hidden: 2,
            window: 1,
            ..ModelConfig::default()
        };
        let mut det = Detector::with_default_prompts(cfg, 1).unwrap();
        det.visual_proj = Projection::identity(2);
        det.audio_proj = Projection::identity(2);
        let text = ToyTextEncoder::new(2, cfg.dim, cfg.token_dim);
        let emb = det.polarity_embeddings(&text).unwrap();
        let mid: Vec<f64> = emb.p_unit().iter().zip(emb.n_unit()).map(|(p, n)| p + n).collect();
        // Matched pairs have cosine x, mismatched y, with x - y = τ_av.
        let x = (0.1 + libm::sqrt(2.0 - 0.01)) / 2.0;
        let y = x - 0.1;
        let batch = [RawClip {
            face: linalg::normalized(&mid, "face").unwrap(),
            visual: Matrix::identity(2),
            audio: Matrix::from_rows(&[[x, y], [y, x]]).unwrap(),
        }];
        let l = det.total_loss(&batch, &text, LossWeights { av: 1.0, ft: 1.0 }).unwrap();
        assert!((l.av - 0.3133).abs() < 5e-5, "{}", l.av);
        assert!((l.ft - core::f64::consts::LN_2).abs() < 5e-5, "{}", l.ft);
        assert!((l.total - 1.0064).abs() < 5e-5, "{}", l.total);
        assert_eq!(l.total, l.av + l.ft);
    }

    fn clip(seed: u64, frames: usize, cfg: &ModelConfig) -> RawClip {
        let mut r = rng::seeded(seed, 99);
        let face = linalg::normalized(&rng::gaussian_vec(&mut r, cfg.dim, 1.0), "t").unwrap();
        RawClip {
            face,
            visual: rng::gaussian_matrix(&mut r, frames, cfg.raw_dim, 1.0),
            audio: rng::gaussian_matrix(&mut r, frames, cfg.raw_dim, 1.0),
        }
    }

    #[test]
    fn coefficient_isolation() {
        let cfg = small();
        let det = Detector::with_default_prompts(cfg, 3).unwrap();
        let text = ToyTextEncoder::new(1, cfg.dim, cfg.token_dim);
        let batch = [clip(1, 4, &cfg), clip(2, 5, &cfg)];
        let only_av = det.total_loss(&batch, &text, LossWeights { av: 1.0, ft: 0.0 }).unwrap();
        assert_eq!(only_av.total, only_av.av);
        let only_ft = det.total_loss(&batch, &text, LossWeights { av: 0.0, ft: 1.0 }).unwrap();
        assert_eq!(only_ft.total, only_ft.ft);
        let both = det.total_loss(&batch, &text, LossWeights::default()).unwrap();
        assert!((both.total - (both.av + both.ft)).abs() < 1e-12);
    }

    #[test]
    fn loss_and_grad_matches_total_loss() {
        let cfg = small();
        let det = Detector::with_default_prompts(cfg, 3).unwrap();
        let text = ToyTextEncoder::new(1, cfg.dim, cfg.token_dim);
        let batch = [clip(4, 3, &cfg)];
        let a = det.total_loss(&batch, &text, LossWeights::default()).unwrap();
        let (b, grads) = det.loss_and_grad(&batch, &text, LossWeights::default()).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        let blocks = det.blocks();
        assert_eq!(grads.len(), blocks.len());
        for (g, (_, p)) in grads.iter().zip(&blocks) {
            assert_eq!(g.len(), p.len());
        }
    }

    #[test]
    fn score_report_bounds() {
        let cfg = small();
        let det = Detector::with_default_prompts(cfg, 3).unwrap();
        let text = ToyTextEncoder::new(1, cfg.dim, cfg.token_dim);
        let s = det.scorer(&text).unwrap().score(&clip(7, 6, &cfg)).unwrap();
        let max = s.frame_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(s.video_score >= max);
        assert!(s.video_score <= max + libm::log(6.0) + 1e-12);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_widths_rejected() {
        let cfg = small();
        let det = Detector::with_default_prompts(cfg, 3).unwrap();
        let text = ToyTextEncoder::new(1, cfg.dim, cfg.token_dim);
        let mut bad = clip(1, 3, &cfg);
        bad.face.push(0.0);
        assert!(det.total_loss(&[bad], &text, LossWeights::default()).is_err());
        assert_eq!(det.total_loss(&[], &text, LossWeights::default()), Err(Error::EmptyBatch));
    }
}
