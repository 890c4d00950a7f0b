//! Turn-level user satisfaction prediction for voice assistants, weakly
//! supervised from session structure, with a satisfaction-gated
//! clarification policy and an A/B simulator.

// Index loops read closer to the math; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dialog_model;
pub mod error;
pub mod evalmetrics;
pub mod gate_sim;
pub mod satformer;
pub mod synthcorpus;
pub mod training;
pub mod weaklabel;

pub use error::{Error, Result};
