//! Multi-modal differential weighting and audio-visual alignment scoring.
//!
//! A small MLP over `[a ; v ; fp]` proposes modality weights `ŵ`; a fixed
//! modulation bias `α` is added and the result re-normalised with a softmax.
//! Frame scores combine three scalar anomaly channels with those weights.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, salt};

pub const DEFAULT_TAU_AV: f64 = 0.1;
pub const DEFAULT_WINDOW: usize = 15;
pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_ALPHA: [f64; 3] = [-0.1, 0.1, 0.1];

/// One-hidden-layer ReLU MLP from `[a ; v ; fp]` (width `4d`) to three logits
/// ordered `(fp, v, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGenerator {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl WeightGenerator {
    pub fn new(seed: u64, dim: usize, hidden: usize) -> Self {
        let mut r = rng::seeded(seed, salt::WEIGHT_GENERATOR);
        let inputs = 4 * dim;
        Self {
            w1: rng::gaussian_matrix(&mut r, hidden, inputs, 1.0 / linalg::sqrt(inputs as f64)),
            b1: vec![0.0; hidden],
            w2: rng::gaussian_matrix(&mut r, 3, hidden, 1.0 / linalg::sqrt(hidden as f64)),
            b2: vec![0.0; 3],
        }
    }

    pub fn from_parts(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        check_dim("hidden bias", w1.rows(), b1.len())?;
        check_dim("output layer inputs", w1.rows(), w2.cols())?;
        check_dim("output layer width", 3, w2.rows())?;
        check_dim("output bias", 3, b2.len())?;
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    /// Raw logits for the concatenation `[a_mean ; v_mean ; fp]`.
    pub fn logits(&self, fp: &[f64], v_mean: &[f64], a_mean: &[f64]) -> Result<[f64; 3]> {
        check_dim("visual mean", a_mean.len(), v_mean.len())?;
        check_dim("pattern width", 2 * a_mean.len(), fp.len())?;
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(a_mean);
        input.extend_from_slice(v_mean);
        input.extend_from_slice(fp);
        check_dim("weight generator input", self.input_dim(), input.len())?;
        let mut h = self.w1.matvec(&input)?;
        for (hi, bi) in h.iter_mut().zip(&self.b1) {
            *hi = (*hi + bi).max(0.0);
        }
        let out = self.w2.matvec(&h)?;
        Ok([out[0] + self.b2[0], out[1] + self.b2[1], out[2] + self.b2[2]])
    }
}

fn softmax3(x: [f64; 3]) -> [f64; 3] {
    let s = linalg::softmax(&x);
    [s[0], s[1], s[2]]
}

/// `ŵ = softmax(MLP([a ; v ; fp]))`.
pub fn generate_weights(generator: &WeightGenerator, fp: &[f64], v_mean: &[f64], a_mean: &[f64]) -> Result<[f64; 3]> {
    let logits = generator.logits(fp, v_mean, a_mean)?;
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weight generator logits".to_string()));
    }
    Ok(softmax3(logits))
}

/// Fixed bias added to the generated weights, ordered `(fp, v, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationVector(pub [f64; 3]);

impl Default for ModulationVector {
    fn default() -> Self {
        Self(DEFAULT_ALPHA)
    }
}

impl fmt::Display for ModulationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for ModulationVector {
    type Err = Error;

    /// Three comma-separated decimals, e.g. `-0.1,0.1,0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!("alpha needs three values, got `{s}`")));
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p.parse().map_err(|_| Error::InvalidConfig(format!("bad alpha component `{p}`")))?;
        }
        if out.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::NonFinite("modulation vector".to_string()));
        }
        Ok(Self(out))
    }
}

/// `w = softmax(ŵ + α)`.
pub fn modulate(w_hat: [f64; 3], alpha: ModulationVector) -> Result<[f64; 3]> {
    if alpha.0.iter().chain(&w_hat).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("modulation input".to_string()));
    }
    Ok(softmax3([w_hat[0] + alpha.0[0], w_hat[1] + alpha.0[1], w_hat[2] + alpha.0[2]]))
}

/// Index of the largest entry, ties going to the lowest index.
pub fn argmax3(w: [f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if w[i] > w[best] {
            best = i;
        }
    }
    best
}

/// Scaled cosine similarities `Φ_ik = ⟨v̂_i, â_k⟩ / τ_av` with a symmetric
/// temporal neighbourhood `T(i) = {k : |i - k| ≤ window}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    phi: Matrix,
    window: usize,
    tau_av: f64,
}

impl AlignmentMatrix {
    /// Wraps a precomputed `Φ`.
    pub fn from_phi(phi: Matrix, window: usize, tau_av: f64) -> Result<Self> {
        check_dim("square alignment matrix", phi.rows(), phi.cols())?;
        if phi.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        check_tau_av(tau_av)?;
        Ok(Self { phi, window, tau_av })
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn tau_av(&self) -> f64 {
        self.tau_av
    }

    pub fn frames(&self) -> usize {
        self.phi.rows()
    }

    /// Half-open index range of `T(i)`.
    pub fn neighbourhood(&self, i: usize) -> core::ops::Range<usize> {
        neighbourhood(i, self.window, self.frames())
    }
}

fn neighbourhood(i: usize, window: usize, frames: usize) -> core::ops::Range<usize> {
    i.saturating_sub(window)..(i + window + 1).min(frames)
}

fn check_tau_av(tau_av: f64) -> Result<()> {
    if tau_av > 0.0 && tau_av.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alignment temperature must be positive, got {tau_av}")))
    }
}

fn unit_rows(m: &Matrix, context: &'static str) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = linalg::norm(m.row(i));
        if !n.is_finite() {
            return Err(Error::NonFinite(format!("row norm in {context}")));
        }
        if n == 0.0 {
            return Err(Error::ZeroNorm(context));
        }
        linalg::scale(out.row_mut(i), 1.0 / n);
        norms.push(n);
    }
    Ok((out, norms))
}

pub fn alignment_matrix(v: &Matrix, a: &Matrix, tau_av: f64, window: usize) -> Result<AlignmentMatrix> {
    check_dim("audio frames", v.rows(), a.rows())?;
    check_dim("audio width", v.cols(), a.cols())?;
    if v.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    check_tau_av(tau_av)?;
    let (vu, _) = unit_rows(v, "visual features")?;
    let (au, _) = unit_rows(a, "audio features")?;
    let phi = phi_from_units(&vu, &au, tau_av);
    Ok(AlignmentMatrix { phi, window, tau_av })
}

fn phi_from_units(vu: &Matrix, au: &Matrix, tau_av: f64) -> Matrix {
    let f = vu.rows();
    let mut phi = Matrix::zeros(f, f);
    for i in 0..f {
        for k in 0..f {
            phi.set(i, k, linalg::dot(vu.row(i), au.row(k)) / tau_av);
        }
    }
    phi
}

/// Row-wise `-log softmax_{k∈T(i)}(Φ_ik)` evaluated at `k = i`.
fn row_terms(phi: &AlignmentMatrix) -> Vec<f64> {
    (0..phi.frames())
        .map(|i| {
            let row = &phi.phi.row(i)[phi.neighbourhood(i)];
            linalg::log_sum_exp(row) - phi.phi.get(i, i)
        })
        .collect()
}

/// Column-wise counterpart: audio frame `t` as the query over visual frames in `T(t)`.
fn column_terms(phi: &AlignmentMatrix) -> Vec<f64> {
    (0..phi.frames())
        .map(|t| {
            let col: Vec<f64> = phi.neighbourhood(t).map(|i| phi.phi.get(i, t)).collect();
            linalg::log_sum_exp(&col) - phi.phi.get(t, t)
        })
        .collect()
}

/// `L_av = -(1/F) Σ_i log(e^{Φ_ii} / Σ_{k∈T(i)} e^{Φ_ik})`.
pub fn av_alignment_loss(phi: &AlignmentMatrix) -> f64 {
    let terms = row_terms(phi);
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Gradient of [`av_alignment_loss`] with respect to `Φ`.
pub fn av_alignment_loss_grad_phi(phi: &AlignmentMatrix) -> Matrix {
    let f = phi.frames();
    let mut grad = Matrix::zeros(f, f);
    for i in 0..f {
        let range = phi.neighbourhood(i);
        let probs = linalg::softmax(&phi.phi.row(i)[range.clone()]);
        for (k, p) in range.zip(probs) {
            let delta = if k == i { 1.0 } else { 0.0 };
            grad.set(i, k, (p - delta) / f as f64);
        }
    }
    grad
}

/// Alignment loss and its gradients with respect to the (unnormalised) rows
/// of `v` and `a`.
pub fn alignment_loss_and_grad(v: &Matrix, a: &Matrix, tau_av: f64, window: usize) -> Result<(f64, Matrix, Matrix)> {
    check_dim("audio frames", v.rows(), a.rows())?;
    check_dim("audio width", v.cols(), a.cols())?;
    if v.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    check_tau_av(tau_av)?;
    let (vu, vn) = unit_rows(v, "visual features")?;
    let (au, an) = unit_rows(a, "audio features")?;
    let phi = AlignmentMatrix { phi: phi_from_units(&vu, &au, tau_av), window, tau_av };
    let loss = av_alignment_loss(&phi);
    let gphi = av_alignment_loss_grad_phi(&phi);

    let f = v.rows();
    let d = v.cols();
    let mut grad_vu = Matrix::zeros(f, d);
    let mut grad_au = Matrix::zeros(f, d);
    for i in 0..f {
        for k in phi.neighbourhood(i) {
            let g = gphi.get(i, k) / tau_av;
            if g != 0.0 {
                linalg::axpy(g, au.row(k), grad_vu.row_mut(i));
                linalg::axpy(g, vu.row(i), grad_au.row_mut(k));
            }
        }
    }
    let mut grad_v = Matrix::zeros(f, d);
    let mut grad_a = Matrix::zeros(f, d);
    for i in 0..f {
        grad_v.row_mut(i).copy_from_slice(&linalg::normalize_backward(vu.row(i), vn[i], grad_vu.row(i)));
        grad_a.row_mut(i).copy_from_slice(&linalg::normalize_backward(au.row(i), an[i], grad_au.row(i)));
    }
    Ok((loss, grad_v, grad_a))
}

/// Per-frame alignment anomaly channels `(r_t, c_t)`: negative log in-window
/// softmax probability of the diagonal, visual-as-query and audio-as-query.
pub fn channel_scores(phi: &AlignmentMatrix) -> (Vec<f64>, Vec<f64>) {
    (row_terms(phi), column_terms(phi))
}

/// `s_t = w_fp·u_fp + w_v·r_t + w_a·c_t`.
pub fn frame_scores(phi: &AlignmentMatrix, u_fp: f64, w: [f64; 3]) -> Result<Vec<f64>> {
    if !u_fp.is_finite() || w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("frame score inputs".to_string()));
    }
    let (r, c) = channel_scores(phi);
    Ok(combine_channels(u_fp, &r, &c, w))
}

pub fn combine_channels(u_fp: f64, r: &[f64], c: &[f64], w: [f64; 3]) -> Vec<f64> {
    r.iter().zip(c).map(|(rt, ct)| w[0] * u_fp + w[1] * rt + w[2] * ct).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi2() -> AlignmentMatrix {
        AlignmentMatrix::from_phi(Matrix::identity(2), 15, 1.0).unwrap()
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut g = WeightGenerator::new(1, 2, 4);
        g.w2 = Matrix::zeros(3, 4);
        let w = generate_weights(&g, &[1.0, 2.0, 3.0, 4.0], &[0.5, 0.5], &[1.0, -1.0]).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bias_logits_softmax() {
        let mut g = WeightGenerator::new(1, 1, 2);
        g.w2 = Matrix::zeros(3, 2);
        g.b2 = vec![0.0, 0.0, core::f64::consts::LN_2];
        let w = generate_weights(&g, &[0.0, 0.0], &[0.0], &[0.0]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert!((w[2] - 0.5).abs() < 1e-15);
        assert!(generate_weights(&g, &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn default_modulation_of_uniform() {
        let w = modulate([1.0 / 3.0; 3], ModulationVector::default()).unwrap();
        assert!((w[0] - 0.290_460_79).abs() < 1e-8);
        assert!((w[1] - 0.354_769_61).abs() < 1e-8);
        assert_eq!(w[1], w[2]);
        let zero = modulate([1.0 / 3.0; 3], ModulationVector([0.0; 3])).unwrap();
        assert!(zero.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn alpha_parsing() {
        let a: ModulationVector = "-0.1,0.1,0.1".parse().unwrap();
        assert_eq!(a, ModulationVector::default());
        assert!("0.1,0.1".parse::<ModulationVector>().is_err());
        assert!("a,b,c".parse::<ModulationVector>().is_err());
        assert!(modulate([0.3; 3], ModulationVector([f64::NAN, 0.0, 0.0])).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax3([0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax3([0.5, 0.5, 0.0]), 0);
    }

    #[test]
    fn orthonormal_rows_give_scaled_identity() {
        let v = Matrix::identity(3);
        let phi = alignment_matrix(&v, &v, 1.0, 15).unwrap();
        assert_eq!(phi.phi(), &Matrix::identity(3));
        let one = alignment_matrix(
            &Matrix::from_rows(&[[2.0, 0.0]]).unwrap(),
            &Matrix::from_rows(&[[0.0, 3.0]]).unwrap(),
            0.1,
            0,
        )
        .unwrap();
        assert_eq!(one.frames(), 1);
        assert_eq!(one.neighbourhood(0), 0..1);
    }

    #[test]
    fn alignment_errors() {
        let v = Matrix::identity(3);
        assert!(matches!(alignment_matrix(&v, &Matrix::identity(2), 0.1, 1), Err(Error::DimensionMismatch { .. })));
        assert_eq!(alignment_matrix(&Matrix::zeros(0, 3), &Matrix::zeros(0, 3), 0.1, 1), Err(Error::EmptySequence));
        assert!(alignment_matrix(&v, &v, 0.0, 1).is_err());
    }

    #[test]
    fn loss_closed_forms() {
        let single = AlignmentMatrix::from_phi(Matrix::from_rows(&[[3.0]]).unwrap(), 15, 0.1).unwrap();
        assert_eq!(av_alignment_loss(&single), 0.0);
        assert!((av_alignment_loss(&phi2()) - 0.313_261_687_518_222_86).abs() < 1e-15);
        let flat = AlignmentMatrix::from_phi(Matrix::zeros(6, 6), 1, 0.1).unwrap();
        // interior rows see 3 candidates, the two end rows see 2
        let expected = (4.0 * libm::log(3.0) + 2.0 * libm::log(2.0)) / 6.0;
        assert!((av_alignment_loss(&flat) - expected).abs() < 1e-12);
    }

    #[test]
    fn frame_score_cases() {
        let s = frame_scores(&phi2(), 0.0, [0.0, 0.5, 0.5]).unwrap();
        for st in &s {
            assert!((st - 0.313_261_687_518_222_86).abs() < 1e-15);
        }
        let s = frame_scores(&phi2(), 0.7, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, vec![0.7, 0.7]);
        let peaked =
            AlignmentMatrix::from_phi(Matrix::from_rows(&[[500.0, 0.0], [0.0, 500.0]]).unwrap(), 15, 0.1).unwrap();
        let s = frame_scores(&peaked, 0.3, [0.0, 1.0, 0.0]).unwrap();
        assert!(s.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn window_limits_candidates() {
        // far-off large entry is outside T(0) when window = 0
        let phi = Matrix::from_rows(&[[0.0, 9.0], [9.0, 0.0]]).unwrap();
        let narrow = AlignmentMatrix::from_phi(phi.clone(), 0, 0.1).unwrap();
        assert_eq!(av_alignment_loss(&narrow), 0.0);
        let wide = AlignmentMatrix::from_phi(phi, 1, 0.1).unwrap();
        assert!(av_alignment_loss(&wide) > 8.0);
    }
}
