#![cfg_attr(not(feature = "std"), no_std)]
//! Unified face matching and spoof detection on a shifted-window
//! transformer backbone.
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats and the command line live in the `unispoof` crate.

extern crate alloc;

pub mod attention;
pub mod augment;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod heads;
pub mod hilo;
pub mod image;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod swin;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::{DType, Real};
pub use tape::{PoolMode, Tape, Var};
pub use tensor::Tensor;
