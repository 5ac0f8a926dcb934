//! Example-based single-image super-resolution.
//!
//! Low-resolution patches are matched against a training database of
//! LR/HR patch pairs with a multi-table Cauchy-projection LSH index. The
//! matched neighbours give locally-linear reconstruction weights, which are
//! transferred to the paired high-resolution patches. Overlapping patch
//! predictions are blended, and the assembled estimate is refined by
//! iterative back-projection through an approximate cross-bilateral filter
//! whose range term is evaluated in constant time with integral images.
//!
//! Module map:
//!
//! * [`image`], [`features`], [`integral`], [`metrics`], [`io`]: pixel primitives.
//! * [`lsh`]: Cauchy-projection hash index.
//! * [`lle`]: sum-to-one constrained reconstruction weights.
//! * [`pipeline`]: patch inference, assembly, back-projection.
//! * [`training`]: patch-pair database generation and persistence.
//! * [`bench`]: exhaustive baseline and the comparison harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
mod codec;
pub mod error;
pub mod features;
pub mod image;
pub mod integral;
pub mod io;
pub mod lle;
pub mod lsh;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use crate::error::{Error, Result};
pub use crate::image::{Image, Kernel, PatchGrid};
pub use crate::lsh::{LshIndex, LshParams, PatchId};
pub use crate::pipeline::{Model, SrConfig, SrResult};
pub use crate::training::{PatchDb, SampleSpec};
