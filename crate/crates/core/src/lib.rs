//! Elicit expert uncertainty as Beta distributions from records of binary
//! expert decisions.
//!
//! A dropout-equipped network ([`net`]) is trained on decision records
//! ([`datasets`], [`synthetic`]). Sampling it repeatedly with dropout active
//! yields a sample of probabilities per case, which [`elicitation`] fits with
//! a Beta distribution by the method of moments. [`diagnostics`] scores the
//! elicited distributions against the recorded decisions.

pub mod cli;
pub mod datasets;
pub mod diagnostics;
pub mod elicitation;
pub mod error;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
