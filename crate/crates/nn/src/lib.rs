//! Small reverse-mode tensor engine and the super-resolution models built on it.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod layers;
pub mod loss;
pub mod model;
pub mod params;
pub mod quantizer;
pub mod scalar;
pub mod tensor;

pub use error::{NnError, Result};
pub use graph::{Gradients, Graph, Var};
pub use loss::{total_loss, LossTerms};
pub use model::{ForwardOut, Model, ModelConfig, ModelKind};
pub use params::{Adam, Bound, ParamId, ParamStore};
pub use quantizer::{quantize, Quantized};
pub use scalar::Scalar;
pub use tensor::Tensor;
