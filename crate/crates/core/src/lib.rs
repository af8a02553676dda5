//! Numerical core for text-guided audio-visual forgery detection.
//!
//! Everything here is pure computation over in-memory buffers and only needs
//! `alloc`: the face/text prompt alignment objective, the differential
//! modality weighting and alignment scores, the training step with its
//! optimizer, evaluation metrics and the pixel-domain frame corruptions.
//! File formats, decoding, spectrograms and the command-line runner live in
//! the companion `avfd` crate.
//!
//! Conventions used throughout:
//!
//! * Modality triples are always ordered `(fp, v, a)`: authentic facial
//!   pattern, visual stream, audio stream.
//! * Fake is the positive class; larger anomaly scores mean more forged.
//! * Matrices are row-major with one time step (frame) per row.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod fapl;
pub mod image;
pub mod linalg;
pub mod mmdwl;
pub mod model;
pub mod optim;
pub mod perturb;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
