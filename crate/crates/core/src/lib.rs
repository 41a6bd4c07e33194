//! Non-Gaussianity witness for heralded photon-subtracted squeezed states:
//! the Gaussian boundary, a Gaussian-covariance model of the experiment, a
//! Fock-space reference engine, simulated homodyne data and the estimators
//! that turn it into witness values.

pub mod error;
pub mod estimation;
pub mod exec;
pub mod fit;
pub mod fock;
pub mod gaussian;
pub mod homodyne;
pub mod special;
pub mod witness;

pub use error::{Error, Result};
pub use exec::Execution;
