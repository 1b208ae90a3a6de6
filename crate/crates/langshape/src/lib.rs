//! Instruction-conditioned reward shaping for sparse-reward RL.

pub mod error;
pub mod lang;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
