//! Deepfake frame classification with three small convolutional detectors,
//! frame-to-video prediction fusion, and fast-gradient-sign adversarial
//! robustness experiments.

pub mod attack;
pub mod data;
pub mod error;
pub mod eval;
pub mod nets;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use tensor::Tensor;
pub use types::{Label, ModelId, ResolutionTag, Split};
