//! Dataset IO, file formats and the command-line runner for the detector in
//! `avfd-core`.

pub mod checkpoint;
pub mod config;
pub mod corrupt;
pub mod error;
pub mod features;
pub mod manifest;
pub mod media;
pub mod mel;
pub mod pipeline;
pub mod plot;
pub mod prompts;
pub mod synth;

pub use error::{Error, Result};
