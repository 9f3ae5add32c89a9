//! Sequential latent-variable forecaster whose filter pushes several cubature
//! samples through a recurrent cell and keeps a mixture-of-Gaussians
//! posterior over the latent state.

pub mod cli;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod inference;
pub mod nets;
pub mod objective;
pub mod sampling;

pub use error::{Result, VdmError};

/// Random number generator used throughout the crate.
pub type VdmRng = rand_chacha::ChaCha8Rng;
