//! Desk-scale laboratory for class-imbalanced classification.
//!
//! The crate bundles everything needed to study how re-weighting and
//! logit adjustment interact on long-tailed data:
//!
//! - [`losses`]: the vector-scaled softmax loss family `L(s, y) =
//!   -alpha_y * log softmax(beta .* s + delta)_y`, its exact gradient,
//!   and the usual presets (balanced, class-balanced, logit-adjusted,
//!   class-dependent temperatures, margin-style offsets).
//! - [`data`]: synthetic long-tailed / step-imbalanced Gaussian
//!   mixtures, CSV ingestion, and canonical class statistics.
//! - [`model`]: small linear / one-hidden-layer scorers with explicit
//!   forward and backward passes and a momentum SGD optimizer.
//! - [`train`]: the deferred re-weighting training loop: warm-up
//!   phase, re-weighting phase, truncated multiplicative adjustment,
//!   and per-epoch diagnostics.
//! - [`bounds`]: generalization-bound machinery: per-class minimal
//!   scores and margins, local Lipschitz constants, Rademacher
//!   complexity estimates, and the data-dependent vs. union bound
//!   comparison.
//! - [`eval`]: balanced accuracy and minority/majority diagnostics.
//! - [`cli`]: the `imblab` command-line entry points.
//!
//! All randomness flows from explicit 64-bit seeds through [`seed`],
//! so every artifact the crate produces is reproducible byte for byte.

// `!(x > 0.0)` is used for validation throughout: unlike `x <= 0.0`
// it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod matrix;
pub mod model;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
