//! Differentiable operators recorded on the [`Tape`](crate::tape::Tape).

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod shape;

pub use elementwise::{normal_cdf, normal_pdf, round_half_away};
pub use norm::LAYER_NORM_EPS;
pub use shape::{reflect_index, PadMode};
