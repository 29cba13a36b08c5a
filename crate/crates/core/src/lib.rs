//! Operator norms of state transition tensors, with guidance, measurement
//! and nonlinearity-index applications.

pub mod cli;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod guidance;
pub mod measurement;
pub mod nonlinearity;
pub mod norms;
pub mod optim;
pub mod oracle;
pub mod sampling;
pub mod tensor;

pub use error::{Error, Result};
