//! Facial authenticity pattern learning.
//!
//! Positive and negative prompt sets, each prompt extended with learnable
//! tokens, are encoded, normalised, averaged per polarity and pushed through
//! one shared projection `W` to give the polarity embeddings `p` and `n`.
//! Faces are pulled towards `p` and away from `n` with a two-way
//! temperature-scaled contrastive loss.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Label;
use crate::encoders::TextEncoder;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, salt};

pub const DEFAULT_POSITIVE_PROMPTS: [&str; 3] =
    ["a real human face", "a bonafide face with expressive eyes", "a genuine face with natural mouth"];

pub const DEFAULT_NEGATIVE_PROMPTS: [&str; 3] =
    ["a fake human face", "a spoof face with dull eyes", "a forged face with unnatural mouth"];

pub const DEFAULT_TAU: f64 = 0.07;
pub const DEFAULT_TOKENS_PER_PROMPT: usize = 4;
pub const TOKEN_INIT_STD: f64 = 0.02;
pub const PROJECTION_INIT_STD: f64 = 0.01;

/// Multi-granularity prompt texts with `l` learnable tokens per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptHierarchy {
    positives: Vec<String>,
    negatives: Vec<String>,
    tokens_per_prompt: usize,
    positive_tokens: Vec<Matrix>,
    negative_tokens: Vec<Matrix>,
}

impl PromptHierarchy {
    /// Learnable tokens start at zero plus seeded noise of std [`TOKEN_INIT_STD`].
    pub fn new(
        positives: Vec<String>,
        negatives: Vec<String>,
        token_dim: usize,
        tokens_per_prompt: usize,
        seed: u64,
    ) -> Self {
        let mut r = rng::seeded(seed, salt::PROMPT_TOKENS);
        let mut init = |count: usize| -> Vec<Matrix> {
            (0..count).map(|_| rng::gaussian_matrix(&mut r, tokens_per_prompt, token_dim, TOKEN_INIT_STD)).collect()
        };
        let positive_tokens = init(positives.len());
        let negative_tokens = init(negatives.len());
        Self { positives, negatives, tokens_per_prompt, positive_tokens, negative_tokens }
    }

    /// The face / eyes / mouth prompt pairs.
    pub fn default_prompts(token_dim: usize, tokens_per_prompt: usize, seed: u64) -> Self {
        Self::new(
            DEFAULT_POSITIVE_PROMPTS.iter().map(|s| s.to_string()).collect(),
            DEFAULT_NEGATIVE_PROMPTS.iter().map(|s| s.to_string()).collect(),
            token_dim,
            tokens_per_prompt,
            seed,
        )
    }

    pub fn positives(&self) -> &[String] {
        &self.positives
    }

    pub fn negatives(&self) -> &[String] {
        &self.negatives
    }

    pub fn tokens_per_prompt(&self) -> usize {
        self.tokens_per_prompt
    }

    pub fn positive_tokens(&self) -> &[Matrix] {
        &self.positive_tokens
    }

    pub fn negative_tokens(&self) -> &[Matrix] {
        &self.negative_tokens
    }

    /// All learnable token blocks, positives first.
    pub fn token_blocks_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.positive_tokens.iter_mut().chain(self.negative_tokens.iter_mut())
    }

    pub fn token_blocks(&self) -> impl Iterator<Item = &Matrix> {
        self.positive_tokens.iter().chain(self.negative_tokens.iter())
    }

    /// Same prompts and tokens with the two polarities exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            positives: self.negatives.clone(),
            negatives: self.positives.clone(),
            tokens_per_prompt: self.tokens_per_prompt,
            positive_tokens: self.negative_tokens.clone(),
            negative_tokens: self.positive_tokens.clone(),
        }
    }
}

/// `W` initialised to identity plus seeded noise of std [`PROJECTION_INIT_STD`].
pub fn init_polarity_projection(dim: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed, salt::POLARITY_PROJECTION);
    let mut w = rng::gaussian_matrix(&mut r, dim, dim, PROJECTION_INIT_STD);
    for i in 0..dim {
        let v = w.get(i, i);
        w.set(i, i, v + 1.0);
    }
    w
}

/// Projected polarity embeddings `p`, `n` and the contrast temperature.
///
/// `p` and `n` are the raw projection outputs; similarities always use their
/// normalised forms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityEmbeddings {
    p: Vec<f64>,
    n: Vec<f64>,
    p_unit: Vec<f64>,
    n_unit: Vec<f64>,
    tau: f64,
}

impl PolarityEmbeddings {
    pub fn new(p: Vec<f64>, n: Vec<f64>, tau: f64) -> Result<Self> {
        check_dim("polarity embeddings", p.len(), n.len())?;
        check_tau(tau)?;
        let p_unit = linalg::normalized(&p, "positive embedding")?;
        let n_unit = linalg::normalized(&n, "negative embedding")?;
        Ok(Self { p, n, p_unit, n_unit, tau })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    pub fn p_unit(&self) -> &[f64] {
        &self.p_unit
    }

    pub fn n_unit(&self) -> &[f64] {
        &self.n_unit
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `(s⁺, s⁻)` for one unit face vector.
    pub fn logits(&self, face: &[f64]) -> Result<(f64, f64)> {
        check_dim("face vs polarity embedding", self.dim(), face.len())?;
        let f = linalg::normalized(face, "face")?;
        Ok((linalg::dot(&f, &self.p_unit) / self.tau, linalg::dot(&f, &self.n_unit) / self.tau))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(alloc::format!("temperature must be positive, got {tau}")))
    }
}

/// One polarity's forward intermediates, kept for back-propagation.
struct PolarityPass {
    ids: Vec<Vec<u32>>,
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
    mean: Vec<f64>,
    projected: Vec<f64>,
}

fn polarity_pass<T: TextEncoder + ?Sized>(
    texts: &[String],
    tokens: &[Matrix],
    text: &T,
    w: &Matrix,
    which: &'static str,
) -> Result<PolarityPass> {
    if texts.is_empty() {
        return Err(Error::EmptyPolarity(which));
    }
    check_dim("text encoder vs projection", text.dim(), w.cols())?;
    let mut pass = PolarityPass {
        ids: Vec::with_capacity(texts.len()),
        units: Vec::with_capacity(texts.len()),
        norms: Vec::with_capacity(texts.len()),
        mean: vec![0.0; text.dim()],
        projected: Vec::new(),
    };
    for (t, tok) in texts.iter().zip(tokens) {
        let ids = text.tokenize(t);
        let e = text.encode(&ids, tok)?;
        check_dim("text embedding", text.dim(), e.len())?;
        let n = linalg::norm(&e);
        let u = linalg::normalized(&e, "prompt embedding")?;
        linalg::axpy(1.0 / texts.len() as f64, &u, &mut pass.mean);
        pass.ids.push(ids);
        pass.units.push(u);
        pass.norms.push(n);
    }
    pass.projected = w.matvec(&pass.mean)?;
    Ok(pass)
}

/// `p = W(mean_i f_i^p / ‖f_i^p‖)`, `n = W(mean_i f_i^n / ‖f_i^n‖)`, one shared `W`.
pub fn encode_polarity<T: TextEncoder + ?Sized>(
    prompts: &PromptHierarchy,
    text: &T,
    w: &Matrix,
    tau: f64,
) -> Result<PolarityEmbeddings> {
    let pos = polarity_pass(&prompts.positives, &prompts.positive_tokens, text, w, "positive")?;
    let neg = polarity_pass(&prompts.negatives, &prompts.negative_tokens, text, w, "negative")?;
    PolarityEmbeddings::new(pos.projected, neg.projected, tau)
}

/// Mean of `softplus(s⁻ - s⁺)`, i.e. `-(1/N) Σ log(e^{s⁺} / (e^{s⁺} + e^{s⁻}))`.
pub fn ftca_loss_from_logits(s_plus: &[f64], s_minus: &[f64]) -> Result<f64> {
    check_dim("logit pairs", s_plus.len(), s_minus.len())?;
    if s_plus.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (&sp, &sn) in s_plus.iter().zip(s_minus) {
        if !(sp.is_finite() && sn.is_finite()) {
            return Err(Error::NonFinite("contrastive logits".to_string()));
        }
        total += linalg::softplus(sn - sp);
    }
    Ok(total / s_plus.len() as f64)
}

/// Face-text contrastive loss over a batch of face vectors, one term per face.
pub fn ftca_loss<F: AsRef<[f64]>>(faces: &[F], emb: &PolarityEmbeddings) -> Result<f64> {
    if faces.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sp = Vec::with_capacity(faces.len());
    let mut sn = Vec::with_capacity(faces.len());
    for f in faces {
        let f = f.as_ref();
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("face vector".to_string()));
        }
        let (a, b) = emb.logits(f)?;
        sp.push(a);
        sn.push(b);
    }
    ftca_loss_from_logits(&sp, &sn)
}

/// Gradients of the contrastive loss with respect to every trainable block.
#[derive(Debug, Clone, PartialEq)]
pub struct FaplGradients {
    pub positive_tokens: Vec<Matrix>,
    pub negative_tokens: Vec<Matrix>,
    pub projection: Matrix,
}

fn polarity_backward<T: TextEncoder + ?Sized>(
    pass: &PolarityPass,
    tokens: &[Matrix],
    grad_projected: &[f64],
    text: &T,
    w: &Matrix,
    grad_w: &mut Matrix,
) -> Result<Vec<Matrix>> {
    grad_w.add_outer(1.0, grad_projected, &pass.mean);
    let grad_mean = w.matvec_t(grad_projected)?;
    let g = pass.units.len() as f64;
    let grad_unit: Vec<f64> = grad_mean.iter().map(|v| v / g).collect();
    let mut out = Vec::with_capacity(tokens.len());
    for ((ids, (u, &n)), tok) in pass.ids.iter().zip(pass.units.iter().zip(&pass.norms)).zip(tokens) {
        let grad_e = linalg::normalize_backward(u, n, &grad_unit);
        out.push(text.backward(ids, tok, &grad_e)?);
    }
    Ok(out)
}

/// Contrastive loss together with its gradient with respect to the learnable
/// tokens and the shared projection `W`.
pub fn ftca_loss_and_grad<T: TextEncoder + ?Sized, F: AsRef<[f64]>>(
    faces: &[F],
    prompts: &PromptHierarchy,
    text: &T,
    w: &Matrix,
    tau: f64,
) -> Result<(f64, FaplGradients)> {
    check_tau(tau)?;
    if faces.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pos = polarity_pass(&prompts.positives, &prompts.positive_tokens, text, w, "positive")?;
    let neg = polarity_pass(&prompts.negatives, &prompts.negative_tokens, text, w, "negative")?;
    let p_norm = linalg::norm(&pos.projected);
    let n_norm = linalg::norm(&neg.projected);
    let p_unit = linalg::normalized(&pos.projected, "positive embedding")?;
    let n_unit = linalg::normalized(&neg.projected, "negative embedding")?;

    let count = faces.len() as f64;
    let d = p_unit.len();
    let mut loss = 0.0;
    let mut grad_p_unit = vec![0.0; d];
    let mut grad_n_unit = vec![0.0; d];
    for f in faces {
        let f = f.as_ref();
        check_dim("face vs polarity embedding", d, f.len())?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("face vector".to_string()));
        }
        let f = linalg::normalized(f, "face")?;
        let sp = linalg::dot(&f, &p_unit) / tau;
        let sn = linalg::dot(&f, &n_unit) / tau;
        loss += linalg::softplus(sn - sp);
        // d softplus(sn - sp) / d sn = σ(sn - sp) = -d/d sp
        let g = linalg::sigmoid(sn - sp) / count;
        linalg::axpy(-g / tau, &f, &mut grad_p_unit);
        linalg::axpy(g / tau, &f, &mut grad_n_unit);
    }
    loss /= count;

    let grad_p = linalg::normalize_backward(&p_unit, p_norm, &grad_p_unit);
    let grad_n = linalg::normalize_backward(&n_unit, n_norm, &grad_n_unit);
    let mut projection = Matrix::zeros(w.rows(), w.cols());
    let positive_tokens = polarity_backward(&pos, &prompts.positive_tokens, &grad_p, text, w, &mut projection)?;
    let negative_tokens = polarity_backward(&neg, &prompts.negative_tokens, &grad_n, text, w, &mut projection)?;
    Ok((loss, FaplGradients { positive_tokens, negative_tokens, projection }))
}

/// Facial anomaly read-out `⟨f, n̂⟩ - ⟨f, p̂⟩`, in `[-2, 2]` for unit `f`.
pub fn facial_anomaly(face: &[f64], emb: &PolarityEmbeddings) -> Result<f64> {
    check_dim("face vs polarity embedding", emb.dim(), face.len())?;
    if face.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("face vector".to_string()));
    }
    Ok(linalg::dot(face, &emb.n_unit) - linalg::dot(face, &emb.p_unit))
}

/// Authentic facial pattern `fp = [p ; f]` (unnormalised `p`), length `2d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthenticPattern(Vec<f64>);

impl AuthenticPattern {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_pattern(face: &[f64], emb: &PolarityEmbeddings) -> Result<AuthenticPattern> {
    check_dim("face vs polarity embedding", emb.dim(), face.len())?;
    let mut v = Vec::with_capacity(2 * face.len());
    v.extend_from_slice(&emb.p);
    v.extend_from_slice(face);
    Ok(AuthenticPattern(v))
}

/// Mean similarity of one label group to the positive and negative texts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSimilarity {
    pub positive: f64,
    pub negative: f64,
    pub difference: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport {
    pub real: GroupSimilarity,
    pub fake: GroupSimilarity,
}

/// Textual-visual similarity per label group. Each entry is one frame
/// embedding; similarities are computed per frame and averaged over frames.
pub fn similarity_diagnostic<F: AsRef<[f64]>>(
    frames: &[(Label, F)],
    emb: &PolarityEmbeddings,
) -> Result<SimilarityReport> {
    let group = |label: Label, name: &'static str| -> Result<GroupSimilarity> {
        let mut pos = 0.0;
        let mut neg = 0.0;
        let mut count = 0usize;
        for (l, f) in frames {
            if *l != label {
                continue;
            }
            let f = linalg::normalized(f.as_ref(), "face frame")?;
            check_dim("face vs polarity embedding", emb.dim(), f.len())?;
            pos += linalg::dot(&f, &emb.p_unit);
            neg += linalg::dot(&f, &emb.n_unit);
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyGroup(name));
        }
        let (pos, neg) = (pos / count as f64, neg / count as f64);
        Ok(GroupSimilarity { positive: pos, negative: neg, difference: pos - neg, count })
    };
    Ok(SimilarityReport { real: group(Label::Real, "real")?, fake: group(Label::Fake, "fake")? })
}
