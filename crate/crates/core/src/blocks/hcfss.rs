use super::LEAKY_SLOPE;
use crate::error::{Error, Result};
use crate::frequency::Afmm;
use crate::nn::{channel_norm, Conv2d, Init, LayerNorm};
use crate::params::ParamBuilder;
use crate::ssm::VonssBlock;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HcfssConfig {
    pub channels: usize,
    pub state: usize,
    pub afmm_window: usize,
}

/// `x + conv(lrelu(conv(x)))`, two 3x3 convolutions.
#[derive(Clone, Debug)]
pub struct ResLocal {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResLocal {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        pb.scoped(name, |pb| Self {
            conv1: Conv2d::new(pb, "conv1", channels, channels, 3, 1, Init::FanIn),
            conv2: Conv2d::new(pb, "conv2", channels, channels, 3, 1, Init::Zero),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let u = self.conv1.forward(t, x)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.conv2.forward(t, u)?;
        t.add(x, u)
    }
}

/// Two residual stages: omni-directional scan block on the normalised input,
/// then frequency modulation.
#[derive(Clone, Debug)]
pub struct Vfss {
    norm: LayerNorm,
    vonss: VonssBlock,
    afmm: Afmm,
}

impl Vfss {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, state: usize, window: usize) -> Self {
        pb.scoped(name, |pb| Self {
            norm: LayerNorm::new(pb, "norm", channels),
            vonss: VonssBlock::new(pb, "vonss", channels, state),
            afmm: Afmm::new(pb, "afmm", channels, window),
        })
    }

    pub fn vonss(&self) -> &VonssBlock {
        &self.vonss
    }

    pub fn afmm(&self) -> &Afmm {
        &self.afmm
    }

    pub fn norm(&self) -> &LayerNorm {
        &self.norm
    }

    /// `vonss(LN(x)) + x`
    pub fn stage1<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let n = channel_norm(t, &self.norm, x)?;
        let v = self.vonss.forward(t, n)?;
        t.add(v, x)
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let x1 = self.stage1(t, x)?;
        let f = self.afmm.forward(t, x1)?;
        t.add(f, x1)
    }
}

/// Hybrid block: 1x1 conv, channel split into a local convolutional branch
/// and a long-range [`Vfss`] branch, concat, 1x1 fuse, outer residual.
#[derive(Clone, Debug)]
pub struct Hcfss {
    proj_in: Conv2d,
    local: ResLocal,
    vfss: Vfss,
    fuse: Conv2d,
    channels: usize,
}

impl Hcfss {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: HcfssConfig) -> Self {
        let c = cfg.channels;
        assert!(c % 2 == 0, "HCFSS needs an even channel count, got {c}");
        pb.scoped(name, |pb| Self {
            proj_in: Conv2d::new(pb, "conv1x1_in", c, c, 1, 1, Init::FanIn),
            local: ResLocal::new(pb, "local", c / 2),
            vfss: Vfss::new(pb, "vfss", c / 2, cfg.state, cfg.afmm_window),
            fuse: Conv2d::new(pb, "conv1x1_out", c, c, 1, 1, Init::Zero),
            channels: c,
        })
    }

    pub fn fuse(&self) -> &Conv2d {
        &self.fuse
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = t.shape(x).to_vec();
        if s.len() != 3 || s[0] != self.channels {
            return Err(Error::shape(
                "hcfss",
                format!("axis 0: input {s:?} vs {} channels", self.channels),
            ));
        }
        let half = self.channels / 2;
        let u = self.proj_in.forward(t, x)?;
        let loc = t.narrow(u, 0, 0, half)?;
        let lr = t.narrow(u, 0, half, half)?;
        let loc = self.local.forward(t, loc)?;
        let lr = self.vfss.forward(t, lr)?;
        let cat = t.concat(&[loc, lr], 0)?;
        let fused = self.fuse.forward(t, cat)?;
        t.add(x, fused)
    }
}
