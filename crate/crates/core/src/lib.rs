//! Confidence-score purification against data inference attacks.
//!
//! A target classifier's confidence vectors are rewritten by a conditional
//! autoencoder trained on reference non-member outputs, and a fixed subset of
//! training members has its top two labels exchanged so that train and test
//! accuracy line up. The crate also carries the attacks used to measure the
//! defense and the metrics that summarize it.

pub mod attacks;
pub mod confidence;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nncore;
pub mod purifier;
pub mod target;

pub use confidence::ConfidenceVector;
pub use error::{Error, Result};
