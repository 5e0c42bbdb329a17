//! Arbitrary-scale single-image super-resolution.
//!
//! Scales in `(1, 2]` are served by interpolating two neighbouring outputs of
//! a multi-branch network (the Laplacian frequency representation, [`lfr`]);
//! larger scales are reached by recursive deployment ([`scheduler`]). The
//! crate also carries the bicubic resampler, a CPU training pipeline and the
//! evaluation harness.

// `!(x > 0.0)` is how argument checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod imaging;
pub mod kv;
pub mod lfr;
pub mod model;
pub mod pipeline;
pub mod resample;
pub mod scheduler;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
