//! Lottery ticket training with two policies: weight reset (rewind surviving
//! weights to their initial values after each prune) and structure growing
//! (keep learned weights and insert a function-preserving layer instead).

pub mod autograd;
pub mod data;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod policies;
pub mod pruner;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
