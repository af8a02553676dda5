use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("empty audio waveform")]
    EmptyAudio,

    #[error("empty image")]
    EmptyImage,

    #[error("empty batch")]
    EmptyBatch,

    #[error("no prompts for the {0} polarity")]
    EmptyPolarity(&'static str),

    #[error("no samples in the {0} group")]
    EmptyGroup(&'static str),

    #[error("metric needs both classes, got only {0}")]
    SingleClass(&'static str),

    #[error("need at least {needed} samples per set, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),

    #[error("invalid corruption spec: {0}")]
    InvalidSpec(String),

    #[error("jpeg compression requires an image codec")]
    CodecRequired,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
