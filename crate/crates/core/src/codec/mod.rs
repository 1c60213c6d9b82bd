//! End-to-end codec: transforms, entropy coding of images, the
//! rate-distortion objective and a small training loop.

mod coding;
mod config;
mod data;
mod model;
mod train;

pub use coding::{decode_image, encode_image, Decoded, Encoded, PAD_MULTIPLE};
pub use config::{ModelConfig, TrainConfig, LAMBDAS};
pub use data::synthetic_textures;
pub use model::{Analysis, Model, Synthesis};
pub use train::{fine_tune, rd_loss, train_toy, RdTerms, TraceRecord, TrainOutcome};
