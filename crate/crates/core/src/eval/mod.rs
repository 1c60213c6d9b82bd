//! Image I/O, quality metrics and the Bjøntegaard rate difference.

mod bdrate;
mod image;
mod metrics;

pub use bdrate::{bd_rate, RdCurve, RdPoint};
pub use image::{load_image, save_image, ImageBuffer};
pub use metrics::{evaluate, mse, psnr, EvalRecord, PSNR_CAP};
