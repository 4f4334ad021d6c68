//! Design and verification of SEPIC and inverting buck-boost converter
//! chains: closed-form sizing, conduction-loss estimates, and a fixed-step
//! switched state-space simulator to check the designs against.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod circuit;
pub mod error;
pub mod losses;
pub mod measure;
pub mod numfmt;
pub mod quantities;
pub mod simulator;
pub mod sizing;

pub use error::{Error, Result};
