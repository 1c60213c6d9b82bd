use super::LEAKY_SLOPE;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// `[C r^2, H, W] -> [C, r H, r W]` with
/// `out[c, h r + i, w r + j] = in[c r^2 + i r + j, h, w]`.
pub fn pixel_shuffle<T: Scalar>(t: &mut Tape<T>, x: Var, r: usize) -> Result<Var> {
    let s = t.shape(x).to_vec();
    if s.len() != 3 || s[0] % (r * r) != 0 {
        return Err(Error::shape("pixel_shuffle", format!("axis 0: {s:?} not divisible by {}", r * r)));
    }
    let c = s[0] / (r * r);
    let u = t.reshape(x, &[c, r, r, s[1], s[2]])?;
    let u = t.permute(u, &[0, 3, 1, 4, 2])?;
    t.reshape(u, &[c, s[1] * r, s[2] * r])
}

/// Convolution to `r^2` times the channels followed by [`pixel_shuffle`].
#[derive(Clone, Debug)]
pub struct SubpelConv {
    conv: Conv2d,
    r: usize,
}

impl SubpelConv {
    pub fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, c_out: usize, k: usize, r: usize) -> Self {
        Self {
            conv: Conv2d::new(pb, name, c_in, c_out * r * r, k, 1, Init::FanIn),
            r,
        }
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let u = self.conv.forward(t, x)?;
        pixel_shuffle(t, u, self.r)
    }
}

fn check_even<T: Scalar>(t: &Tape<T>, x: Var) -> Result<()> {
    let s = t.shape(x);
    if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(Error::shape("rbs", format!("axes 1,2: {s:?} must be even")));
    }
    Ok(())
}

/// Residual downsampling block: stride-2 3x3 conv, leaky ReLU, 3x3 conv,
/// plus a stride-2 1x1 shortcut.
#[derive(Clone, Debug)]
pub struct Rbs {
    conv1: Conv2d,
    conv2: Conv2d,
    skip: Conv2d,
}

impl Rbs {
    pub fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, c_out: usize) -> Self {
        pb.scoped(name, |pb| Self {
            conv1: Conv2d::new(pb, "conv1", c_in, c_out, 3, 2, Init::FanIn),
            conv2: Conv2d::new(pb, "conv2", c_out, c_out, 3, 1, Init::FanIn),
            skip: Conv2d::new(pb, "skip", c_in, c_out, 1, 2, Init::FanIn),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        check_even(t, x)?;
        let u = self.conv1.forward(t, x)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.conv2.forward(t, u)?;
        let s = self.skip.forward(t, x)?;
        t.add(u, s)
    }
}

/// Residual 2x upsampling block: sub-pixel 3x3 conv, leaky ReLU, 3x3 conv,
/// plus a sub-pixel 1x1 shortcut.
#[derive(Clone, Debug)]
pub struct Rbu {
    up: SubpelConv,
    conv: Conv2d,
    skip: SubpelConv,
}

impl Rbu {
    pub fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, c_out: usize) -> Self {
        pb.scoped(name, |pb| Self {
            up: SubpelConv::new(pb, "subpel", c_in, c_out, 3, 2),
            conv: Conv2d::new(pb, "conv", c_out, c_out, 3, 1, Init::FanIn),
            skip: SubpelConv::new(pb, "skip", c_in, c_out, 1, 2),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let u = self.up.forward(t, x)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.conv.forward(t, u)?;
        let s = self.skip.forward(t, x)?;
        t.add(u, s)
    }
}
