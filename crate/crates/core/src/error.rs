use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by tensor math, model construction and the training harness.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape for {op}: {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("kernel {kernel:?} larger than padded input {padded:?}")]
    KernelTooLarge {
        kernel: [usize; 2],
        padded: [usize; 2],
    },
    #[error("window {window} does not divide {dims:?}")]
    NonDivisibleWindow { window: usize, dims: [usize; 2] },
    #[error("image {size}x{size} is not divisible by patch size {patch}")]
    NonDivisibleImage { size: usize, patch: usize },
    #[error("window {window} exceeds grid {grid:?}")]
    WindowTooLarge { window: usize, grid: [usize; 2] },
    #[error("cannot merge odd grid {grid:?}")]
    OddGrid { grid: [usize; 2] },
    #[error("{heads} heads do not divide {dim} channels")]
    HeadDivisibility { heads: usize, dim: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("loss does not depend on any trainable input")]
    DetachedGraph,
    #[error("backward already ran on this tape; re-run the forward pass")]
    BackwardTwice,
    #[error("parameter {0} has no gradient")]
    MissingGradient(String),
    #[error("unknown parameter {0}")]
    MissingParam(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask size {mask:?} does not match image size {image:?}")]
    MaskSizeMismatch { mask: [usize; 2], image: [usize; 2] },
    #[error("empty score list: {0}")]
    EmptyScores(&'static str),
    #[error("records contain a single class: {0}")]
    SingleClass(&'static str),
    #[error("need at least two identities, got {0}")]
    TooFewIdentities(usize),
    #[error("not enough samples: {0}")]
    InsufficientSamples(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
