use avfd_core::encoders::{RawClip, ToyTextEncoder};
use avfd_core::fapl::{self, PromptHierarchy};
use avfd_core::linalg::{self, Matrix};
use avfd_core::mmdwl;
use avfd_core::model::{Detector, LossWeights, ModelConfig};
use avfd_core::rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = linalg::norm(analytic).max(linalg::norm(numeric));
    if scale < 1e-12 {
        linalg::norm(&diff)
    } else {
        linalg::norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to every entry of `x`.
fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(x);
        x[i] = orig - H;
        let down = f(x);
        x[i] = orig;
        out.push((up - down) / (2.0 * H));
    }
    out
}

fn unit_faces(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed, 77);
    (0..n).map(|_| linalg::normalized(&rng::gaussian_vec(&mut r, d, 1.0), "face").unwrap()).collect()
}

#[test]
fn ftca_gradients_match_finite_differences() {
    let (d, token_dim, n) = (8, 6, 4);
    for (seed, tau) in (0..20u64).flat_map(|s| [(s, fapl::DEFAULT_TAU), (s, 0.5)]) {
        let text = ToyTextEncoder::new(seed + 100, d, token_dim);
        let prompts = PromptHierarchy::default_prompts(token_dim, 4, seed);
        let mut w = fapl::init_polarity_projection(d, seed);
        let mut r = rng::seeded(seed, 5);
        for v in w.as_mut_slice() {
            *v += rng::gaussian(&mut r, 0.3);
        }
        let faces = unit_faces(seed, n, d);
        let (_, grads) = fapl::ftca_loss_and_grad(&faces, &prompts, &text, &w, tau).unwrap();

        let loss_of = |p: &PromptHierarchy, w: &Matrix| {
            let emb = fapl::encode_polarity(p, &text, w, tau).unwrap();
            fapl::ftca_loss(&faces, &emb).unwrap()
        };

        let mut wv = w.as_slice().to_vec();
        let fd_w = numeric_grad(&mut wv, |x| loss_of(&prompts, &Matrix::from_vec(d, d, x.to_vec()).unwrap()));
        let e = rel_err(grads.projection.as_slice(), &fd_w);
        assert!(e < TOL, "seed {seed} tau {tau}: W rel err {e}");

        let analytic: Vec<&Matrix> = grads.positive_tokens.iter().chain(&grads.negative_tokens).collect();
        for (b, grad) in analytic.iter().enumerate() {
            let mut p = prompts.clone();
            let mut x = p.token_blocks().nth(b).unwrap().as_slice().to_vec();
            let fd = numeric_grad(&mut x, |x| {
                p.token_blocks_mut().nth(b).unwrap().as_mut_slice().copy_from_slice(x);
                loss_of(&p, &w)
            });
            let e = rel_err(grad.as_slice(), &fd);
            assert!(e < TOL, "seed {seed} tau {tau}: token block {b} rel err {e}");
        }
    }
}

#[test]
fn alignment_gradients_match_finite_differences() {
    let (f, d) = (4, 8);
    for (seed, tau_av) in (0..20u64).flat_map(|s| [(s, mmdwl::DEFAULT_TAU_AV), (s, 0.5)]) {
        let mut r = rng::seeded(seed, 6);
        let v = rng::gaussian_matrix(&mut r, f, d, 1.0);
        let a = rng::gaussian_matrix(&mut r, f, d, 1.0);
        let window = (seed % 4) as usize;
        let (_, gv, ga) = mmdwl::alignment_loss_and_grad(&v, &a, tau_av, window).unwrap();
        let loss =
            |v: &Matrix, a: &Matrix| mmdwl::av_alignment_loss(&mmdwl::alignment_matrix(v, a, tau_av, window).unwrap());
        let mut x = v.as_slice().to_vec();
        let fd_v = numeric_grad(&mut x, |x| loss(&Matrix::from_vec(f, d, x.to_vec()).unwrap(), &a));
        let mut y = a.as_slice().to_vec();
        let fd_a = numeric_grad(&mut y, |y| loss(&v, &Matrix::from_vec(f, d, y.to_vec()).unwrap()));
        let (ev, ea) = (rel_err(gv.as_slice(), &fd_v), rel_err(ga.as_slice(), &fd_a));
        assert!(ev < TOL && ea < TOL, "seed {seed} tau_av {tau_av}: v {ev}, a {ea}");
    }
}

#[test]
fn detector_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        dim: 8,
        raw_dim: 5,
        token_dim: 6,
        tokens_per_prompt: 2,
        hidden: 3,
        tau: 0.5,
        tau_av: 0.5,
        window: 2,
        ..ModelConfig::default()
    };
    let text = ToyTextEncoder::new(3, cfg.dim, cfg.token_dim);
    let weights = LossWeights { av: 0.7, ft: 1.3 };
    for seed in 0..5u64 {
        let det = Detector::with_default_prompts(cfg, seed).unwrap();
        let mut r = rng::seeded(seed, 8);
        let batch: Vec<RawClip> = (0..3)
            .map(|_| RawClip {
                face: linalg::normalized(&rng::gaussian_vec(&mut r, cfg.dim, 1.0), "f").unwrap(),
                visual: rng::gaussian_matrix(&mut r, 4, cfg.raw_dim, 1.0),
                audio: rng::gaussian_matrix(&mut r, 4, cfg.raw_dim, 1.0),
            })
            .collect();
        let (_, grads) = det.loss_and_grad(&batch, &text, weights).unwrap();
        let names: Vec<String> = det.blocks().into_iter().map(|(n, _)| n).collect();
        for (b, name) in names.iter().enumerate() {
            let mut probe = det.clone();
            let mut x = det.blocks()[b].1.to_vec();
            let fd = numeric_grad(&mut x, |x| {
                probe.blocks_mut()[b].copy_from_slice(x);
                probe.total_loss(&batch, &text, weights).unwrap().total
            });
            let e = rel_err(&grads[b], &fd);
            assert!(e < TOL, "seed {seed}: block {name} rel err {e}");
        }
    }
}
