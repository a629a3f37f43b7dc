//! Numerics for continuous-state branching processes conditioned on
//! extinction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::redundant_guards)]

pub mod error;
pub mod extinction;
pub mod inversion;
pub mod laws;
pub mod mechanism;
pub mod montecarlo;
pub mod quad;
pub mod reference;
pub mod scale;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
