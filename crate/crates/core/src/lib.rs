//! Continual-learning engine for online, task-agnostic image classification.
//!
//! The crate implements a small closed set of differentiable layers (dense,
//! 2-D convolution, GELU, k-WTA with subtraction, a sparse pairwise
//! interaction head and masked softmax cross-entropy), assembles them into
//! the benchmark architectures, and trains them in a single pass over a
//! task stream with streaming per-parameter-importance optimizers
//! (Adagrad / S-MAS) or plain SGD.
//!
//! Everything runs on the CPU in `f32` and is deterministic per seed.

pub mod data;
pub mod error;
pub mod harness;
pub mod layers;
pub mod model;
pub mod optimizer;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ParamTensor, Tensor};
