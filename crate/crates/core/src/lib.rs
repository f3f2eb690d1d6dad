//! Federated learning across parties that own both private data and
//! independently designed models. Parties never share weights: each round
//! they publish class scores on a shared public subset, the server averages
//! them into a consensus, and every party distills that consensus before
//! briefly revisiting its own data.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod tensor;
pub mod transport;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Crate version, recorded in every metrics file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
