use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate-distortion trade-offs of the released operating points.
pub const LAMBDAS: [f64; 6] = [0.0025, 0.0035, 0.0067, 0.0130, 0.0250, 0.0500];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Channels of the main transforms `C`.
    pub channels: usize,
    /// Latent channels `M`.
    pub latent: usize,
    /// Hyper-latent channels `C_z`.
    pub hyper_latent: usize,
    /// Width of the hyper transforms.
    pub hyper_width: usize,
    /// Channel slices `n`.
    pub slices: usize,
    /// Hidden width of the slice networks.
    pub slice_hidden: usize,
    pub heads: usize,
    /// SSM state size `N`.
    pub state: usize,
    /// AFMM window in the HCFSS blocks.
    pub main_window: usize,
    /// Window of FSTAM and of the HCFSS block inside the hyper transforms.
    pub entropy_window: usize,
}

impl ModelConfig {
    /// Small configuration used for tests and toy training.
    pub fn desk() -> Self {
        Self {
            channels: 32,
            latent: 48,
            hyper_latent: 16,
            hyper_width: 32,
            slices: 3,
            slice_hidden: 32,
            heads: 4,
            state: 4,
            main_window: 16,
            entropy_window: 8,
        }
    }

    /// Full-scale widths.
    pub fn full() -> Self {
        Self {
            channels: 256,
            latent: 320,
            hyper_latent: 192,
            hyper_width: 256,
            slices: 5,
            slice_hidden: 256,
            heads: 8,
            state: 16,
            main_window: 16,
            entropy_window: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.channels,
            self.latent,
            self.hyper_latent,
            self.hyper_width,
            self.slices,
            self.slice_hidden,
            self.heads,
            self.state,
            self.main_window,
            self.entropy_window,
        ];
        if fields.contains(&0) {
            return Err(Error::InvalidArgument("model config fields must be positive".into()));
        }
        if self.latent % self.slices != 0 {
            return Err(Error::InvalidArgument(format!(
                "latent channels {} not divisible by {} slices",
                self.latent, self.slices
            )));
        }
        if self.channels % 2 != 0 || self.hyper_width % 2 != 0 {
            return Err(Error::InvalidArgument("HCFSS widths must be even".into()));
        }
        if self.slice_hidden % self.heads != 0 {
            return Err(Error::InvalidArgument("slice width must be divisible by heads".into()));
        }
        Ok(())
    }

    pub(crate) fn to_words(self) -> [u32; 10] {
        [
            self.channels,
            self.latent,
            self.hyper_latent,
            self.hyper_width,
            self.slices,
            self.slice_hidden,
            self.heads,
            self.state,
            self.main_window,
            self.entropy_window,
        ]
        .map(|v| v as u32)
    }

    pub(crate) fn from_words(w: [u32; 10]) -> Self {
        let w = w.map(|v| v as usize);
        Self {
            channels: w[0],
            latent: w[1],
            hyper_latent: w[2],
            hyper_width: w[3],
            slices: w[4],
            slice_hidden: w[5],
            heads: w[6],
            state: w[7],
            main_window: w[8],
            entropy_window: w[9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Initial learning rate; divided by 10 at each fraction in `decay_at`.
    pub lr: f64,
    pub decay_at: Vec<f64>,
    pub batch_size: usize,
    pub steps: usize,
    /// Side of the square training crops (a multiple of 64).
    pub crop: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: LAMBDAS[3],
            lr: 1e-4,
            decay_at: vec![0.8, 0.95],
            batch_size: 1,
            steps: 500,
            crop: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset: 500 single-image steps at a learning rate ten
    /// times the full-scale one.
    pub fn toy(lambda: f64) -> Self {
        Self {
            lambda,
            lr: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} is invalid", self.lr)));
        }
        if self.batch_size == 0 || self.crop == 0 || self.crop % 64 != 0 {
            return Err(Error::InvalidArgument("batch size must be positive and crop a multiple of 64".into()));
        }
        Ok(())
    }

    /// Learning rate in effect at `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let frac = step as f64 / self.steps.max(1) as f64;
        let drops = self.decay_at.iter().filter(|&&d| frac >= d).count();
        self.lr / 10f64.powi(drops as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configs_validate() {
        ModelConfig::desk().validate().unwrap();
        ModelConfig::full().validate().unwrap();
        let bad = ModelConfig { slices: 5, ..ModelConfig::desk() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig { lambda: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn schedule_drops_by_ten() {
        let c = TrainConfig { steps: 100, ..Default::default() };
        assert_eq!(c.lr_at(0), 1e-4);
        assert!((c.lr_at(80) - 1e-5).abs() < 1e-18);
        assert!((c.lr_at(99) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn words_roundtrip() {
        let c = ModelConfig::full();
        assert_eq!(ModelConfig::from_words(c.to_words()), c);
    }
}
