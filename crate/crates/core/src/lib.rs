//! Numerical core for long-tailed multi-label classification.
//!
//! Everything here is pure computation over in-memory buffers: the
//! distribution-balanced loss and its gradient, repeat-factor sampling, a
//! desk-scale linear trainer, raster preprocessing and test-time transforms,
//! score refinement (TTA merge, ensembling, normal gating), zero-shot prompt
//! scoring and the evaluation metric suite. File formats and the CLI live in
//! the `tailkit` crate.
#![no_std]
// NaN must fail parameter checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod sampler;
pub mod trainer;
pub mod zeroshot;

pub use error::{Error, Result};
