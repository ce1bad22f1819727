//! Spatio-temporal Siamese network for exercise-quality similarity and
//! range-of-motion classification, built on a small reverse-mode autodiff
//! core in f64.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod graph;
pub mod network;
pub mod params;
pub mod tensor;
pub mod window;

pub use checkpoint::Checkpoint;
pub use config::{ConvLayer, ModelConfig};
pub use error::{ModelError, Result};
pub use graph::{Graph, Mode, Var};
pub use network::{argmax, cosine, EncodedBatch, EncoderOutput, Model};
pub use params::{Adam, AdamConfig, ParamStore};
pub use tensor::Tensor;
pub use window::{slide, slide_segment, WindowTensor};
