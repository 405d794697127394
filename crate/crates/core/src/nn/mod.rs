//! Minimal dense numeric stack: arrays, the four layer types the quality
//! network needs, weighted cross-entropy, SGD and a finite-difference checker.
//!
//! Layers work on single examples (`[C, H, W]`, `[D]`) and on batches
//! (`[B, C, H, W]`, `[B, D]`). The batched paths are what training uses; the
//! single-example paths are thin wrappers over them, except [`LstmCell::step`]
//! which is written out gate by gate and serves as the reference for the
//! batched recurrent kernels.

mod activation;
mod array;
mod conv;
pub(crate) mod gemm;
pub mod gradcheck;
pub mod init;
mod linear;
mod loss;
mod lstm;
mod sgd;

pub use activation::{relu, relu_backward, relu_in_place, relu_mask_in_place, sigmoid, tanh};
pub use array::DenseArray;
pub use conv::{ConvColumns, ConvGrads, ConvLayer};
pub use linear::{LinearGrads, LinearLayer};
pub use loss::{softmax, weighted_cross_entropy, ClassWeights};
pub use lstm::{LstmCell, LstmSequenceGrads, LstmStepGrads, LstmTrace};
pub use sgd::{Sgd, SgdConfig};
