//! Differentiable building blocks.
//!
//! The layer set is closed: dense, 2-D convolution, GELU, k-WTA with
//! subtraction, the sparse pairwise interaction head, and masked softmax
//! cross-entropy. Each layer owns its parameters and the forward cache
//! needed by its backward pass. All accumulation happens in a fixed index
//! order so results are bitwise reproducible per seed.

mod conv;
mod dense;
mod gelu;
mod kwta;
mod loss;
mod pairwise;

pub use conv::Conv2d;
pub use dense::Dense;
pub use gelu::{gelu, gelu_backward, Gelu};
pub use kwta::{kwta_backward, kwta_forward, Kwta, KwtaSpec};
pub use loss::{masked_softmax_xent, ClassMask};
pub use pairwise::{cross_count, PairwiseConnections};
