use crate::blocks::{Hcfss, HcfssConfig, SubpelConv, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HyperConfig {
    /// Latent channels `M`.
    pub latent: usize,
    /// Hyper-latent channels `C_z`.
    pub hyper_latent: usize,
    /// Width of the hidden layers.
    pub hidden: usize,
    /// Channels of the synthesis outputs.
    pub out: usize,
    pub state: usize,
    pub afmm_window: usize,
}

impl HyperConfig {
    fn hcfss(&self) -> HcfssConfig {
        HcfssConfig {
            channels: self.hidden,
            state: self.state,
            afmm_window: self.afmm_window,
        }
    }
}

/// `y -> z`: 3x3 conv, HCFSS, stride-2 conv, leaky ReLU, stride-2 conv.
#[derive(Clone, Debug)]
pub struct HyperAnalysis {
    conv_in: Conv2d,
    block: Hcfss,
    down1: Conv2d,
    down2: Conv2d,
}

impl HyperAnalysis {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: HyperConfig) -> Self {
        pb.scoped(name, |pb| Self {
            conv_in: Conv2d::new(pb, "conv_in", cfg.latent, cfg.hidden, 3, 1, Init::FanIn),
            block: Hcfss::new(pb, "hcfss", cfg.hcfss()),
            down1: Conv2d::new(pb, "down1", cfg.hidden, cfg.hidden, 3, 2, Init::FanIn),
            down2: Conv2d::new(pb, "down2", cfg.hidden, cfg.hyper_latent, 3, 2, Init::FanIn),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, y: Var) -> Result<Var> {
        let s = t.shape(y);
        if s.len() != 3 || s[1] % 4 != 0 || s[2] % 4 != 0 {
            return Err(Error::shape("h_a", format!("axes 1,2 of {s:?} must be divisible by 4")));
        }
        let u = self.conv_in.forward(t, y)?;
        let u = self.block.forward(t, u)?;
        let u = self.down1.forward(t, u)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        self.down2.forward(t, u)
    }
}

/// `z_hat -> F`: 3x3 conv, two sub-pixel x2 stages, HCFSS, 3x3 conv.
#[derive(Clone, Debug)]
pub struct HyperSynthesis {
    conv_in: Conv2d,
    up1: SubpelConv,
    up2: SubpelConv,
    block: Hcfss,
    conv_out: Conv2d,
}

impl HyperSynthesis {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: HyperConfig) -> Self {
        pb.scoped(name, |pb| Self {
            conv_in: Conv2d::new(pb, "conv_in", cfg.hyper_latent, cfg.hidden, 3, 1, Init::FanIn),
            up1: SubpelConv::new(pb, "up1", cfg.hidden, cfg.hidden, 3, 2),
            up2: SubpelConv::new(pb, "up2", cfg.hidden, cfg.hidden, 3, 2),
            block: Hcfss::new(pb, "hcfss", cfg.hcfss()),
            conv_out: Conv2d::new(pb, "conv_out", cfg.hidden, cfg.out, 3, 1, Init::FanIn),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, z_hat: Var) -> Result<Var> {
        let u = self.conv_in.forward(t, z_hat)?;
        let u = self.up1.forward(t, u)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.up2.forward(t, u)?;
        let u = self.block.forward(t, u)?;
        self.conv_out.forward(t, u)
    }
}
