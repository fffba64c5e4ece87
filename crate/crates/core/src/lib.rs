//! Intra/inter patch mixing forecaster for battery capacity trajectories.
//!
//! The crate is `no_std` (with `alloc`) and carries everything that is pure
//! computation: dense-matrix neural primitives with a gradient tape, the
//! patch layout transforms, the mixer network and its baselines, losses and
//! metrics, cycle-level data handling, a random-forest importance estimator,
//! and the training/evaluation pipeline. File formats, the CLI and threading
//! live in the `iipmix` crate.
//!
//! Layout conventions:
//!
//! - All scalars are `f64`; matrices are row-major.
//! - A multivariate window is a `C x L` matrix (one row per channel).
//! - A batch for one channel is a `B x L` matrix; forecasts come back as
//!   `B x (C * N)` with channel-major columns.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
mod error;
pub mod experiment;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod patching;

pub use error::{Error, Result};
pub use nn::Matrix;
