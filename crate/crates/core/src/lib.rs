//! Learned image codec built from hybrid convolution / frequency
//! state-space transforms, a channel-wise hyperprior entropy model and a
//! bit-exact range coder.

pub mod blocks;
pub mod codec;
pub mod coder;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod frequency;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod selftest;
pub mod ssm;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{ParamBuilder, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
