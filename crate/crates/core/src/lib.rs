//! Inhibited Softmax uncertainty estimation for dense networks.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod heads;
pub mod layers;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod rng;
pub mod uncertainty;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::RngStream;
