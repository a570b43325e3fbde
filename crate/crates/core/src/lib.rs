//! Case-calibrated rewards for tool-calling policies.
//!
//! The crate scores tool-call trajectories against reference calls, profiles
//! execution cases by hardness and failure pattern, shapes reasoning-length
//! rewards by case complexity, and runs a small GRPO simulator that exercises
//! the whole reward path without a language model.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod grpo;
pub mod io;
pub mod model;
pub mod profiling;
pub mod shaping;
pub mod structural;

pub use error::{Error, Result};
