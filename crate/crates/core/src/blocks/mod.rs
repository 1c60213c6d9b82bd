//! Composite blocks of the transforms and the entropy model.

mod attention;
mod fstam;
mod hcfss;
mod resample;

pub use attention::{AttentionTrace, WindowAttention};
pub use fstam::Fstam;
pub use hcfss::{Hcfss, HcfssConfig, ResLocal, Vfss};
pub use resample::{pixel_shuffle, Rbs, Rbu, SubpelConv};

/// Negative slope of every leaky ReLU in the codec.
pub const LEAKY_SLOPE: f64 = 0.01;
