//! Simulation library for communication-constrained distributed estimation
//! in the Gaussian sequence model: a budget-driven minimax protocol, an
//! adaptive local-thresholding protocol, exact transcript bit accounting,
//! Besov-class utilities, closed-form rate oracles, and a reproducible
//! Monte Carlo harness.

// validation uses `!(x > 0.0)` so that NaN arguments are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod besov;
pub mod bitcodec;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod minimax;
pub mod simmodel;

pub use error::{Error, Result};
