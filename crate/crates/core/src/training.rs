//! Real-only training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Label;
use crate::encoders::{RawClip, TextEncoder};
use crate::error::{Error, Result};
use crate::model::{Detector, LossBreakdown, LossWeights};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, salt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 9e-4, batch_size: 512, epochs: 30, loss_weights: LossWeights::default(), seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.loss_weights.av.is_finite() && self.loss_weights.ft.is_finite()) {
            return Err(Error::InvalidConfig("loss coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Training clips that have been checked to be real. This is the only way
/// into [`train`], so fake samples cannot reach an optimiser step.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    ids: Vec<String>,
    clips: Vec<RawClip>,
}

impl TrainingSet {
    pub fn new<I>(labelled: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Label, RawClip)>,
    {
        let mut set = Self::default();
        for (id, label, clip) in labelled {
            if label != Label::Real {
                return Err(Error::Validation(format!("sample `{id}` is {label}; training accepts real samples only")));
            }
            set.ids.push(id);
            set.clips.push(clip);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn clips(&self) -> &[RawClip] {
        &self.clips
    }
}

/// One optimiser step's losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub detector: Detector,
    pub history: Vec<StepRecord>,
    pub epochs: usize,
}

/// Minimises `c_av·L_av + c_ft·L_ft` with Adam. Batch order is reshuffled
/// every epoch from `cfg.seed`, so the run is a pure function of its inputs.
pub fn train<T: TextEncoder + ?Sized>(
    mut detector: Detector,
    set: &TrainingSet,
    cfg: &TrainConfig,
    text: &T,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut history = Vec::new();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { detector, history, epochs: 0 });
    }
    if set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let shapes: Vec<usize> = detector.blocks().iter().map(|(_, b)| b.len()).collect();
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() }, &shapes)?;
    let mut order_rng = rng::seeded(cfg.seed, salt::BATCH_ORDER);
    let mut step = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size.min(set.len()));
    for epoch in 0..cfg.epochs {
        let order = rng::permutation(&mut order_rng, set.len());
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| set.clips[i].clone()));
            let (loss, grads) = detector.loss_and_grad(&batch, text, cfg.loss_weights)?;
            if !loss.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, step {step}: total={} av={} ft={}",
                    loss.total, loss.av, loss.ft
                )));
            }
            history.push(StepRecord { epoch, step, loss });
            opt.update(&mut detector.blocks_mut(), &grads)?;
            step += 1;
        }
    }
    Ok(TrainOutcome { detector, history, epochs: cfg.epochs })
}

/// Mean total loss over the first and last `fraction` of the steps.
pub fn loss_trend(history: &[StepRecord], fraction: f64) -> Option<(f64, f64)> {
    if history.is_empty() {
        return None;
    }
    let k = ((history.len() as f64 * fraction) as usize).max(1);
    let mean = |s: &[StepRecord]| s.iter().map(|r| r.loss.total).sum::<f64>() / s.len() as f64;
    Some((mean(&history[..k]), mean(&history[history.len() - k..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ToyTextEncoder;
    use crate::linalg::{self, Matrix};
    use crate::model::ModelConfig;
    use alloc::string::ToString;

    fn cfg() -> ModelConfig {
        ModelConfig {
            dim: 8,
            raw_dim: 4,
            token_dim: 4,
            tokens_per_prompt: 2,
            hidden: 4,
            window: 3,
            ..ModelConfig::default()
        }
    }

    /// Visual and audio rows share a per-frame one-hot code, faces share a direction.
    fn aligned_clip(seed: u64) -> RawClip {
        let mut r = rng::seeded(seed, 5);
        let perm = rng::permutation(&mut r, 4);
        let mut v = Matrix::zeros(4, 4);
        for (t, &c) in perm.iter().enumerate() {
            v.set(t, c, 1.0);
        }
        let mut face = rng::gaussian_vec(&mut r, 8, 0.1);
        face[0] += 1.0;
        RawClip { face: linalg::normalized(&face, "t").unwrap(), audio: v.clone(), visual: v }
    }

    fn set(n: u64) -> TrainingSet {
        TrainingSet::new((0..n).map(|i| (i.to_string(), Label::Real, aligned_clip(i)))).unwrap()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let det = Detector::with_default_prompts(cfg(), 1).unwrap();
        let text = ToyTextEncoder::new(2, 8, 4);
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let out = train(det.clone(), &set(3), &tc, &text).unwrap();
        assert_eq!(out.detector, det);
        assert!(out.history.is_empty());
    }

    #[test]
    fn fake_sample_rejected_at_the_boundary() {
        let err = TrainingSet::new([("x".to_string(), Label::Fake, aligned_clip(0))]).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("`x`")));
    }

    #[test]
    fn loss_decreases_and_run_is_deterministic() {
        let text = ToyTextEncoder::new(2, 8, 4);
        let tc = TrainConfig { epochs: 20, batch_size: 4, learning_rate: 1e-2, seed: 9, ..TrainConfig::default() };
        let det = Detector::with_default_prompts(cfg(), 1).unwrap();
        let a = train(det.clone(), &set(16), &tc, &text).unwrap();
        let b = train(det, &set(16), &tc, &text).unwrap();
        assert_eq!(a, b);
        let (first, last) = loss_trend(&a.history, 0.2).unwrap();
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn invalid_config_rejected() {
        let text = ToyTextEncoder::new(2, 8, 4);
        let det = Detector::with_default_prompts(cfg(), 1).unwrap();
        let tc = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(train(det, &set(1), &tc, &text), Err(Error::InvalidConfig(_))));
    }
}
