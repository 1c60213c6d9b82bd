//! Parameterised layers. Each layer holds only [`ParamId`]s; its forward pass
//! is generic over the scalar type of the tape it runs on.

use crate::error::Result;
use crate::ops::LAYER_NORM_EPS;
use crate::params::{ParamBuilder, ParamId};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// How a weight tensor is initialised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    FanIn,
    TruncNormal(f32),
    Zero,
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: ParamId,
    bias: ParamId,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl Conv2d {
    /// `k x k` convolution with "same"-style padding `k / 2`.
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        init: Init,
    ) -> Self {
        Self::grouped(pb, name, c_in, c_out, k, stride, 1, init)
    }

    pub fn depthwise(pb: &mut ParamBuilder, name: &str, c: usize, k: usize, init: Init) -> Self {
        Self::grouped(pb, name, c, c, k, 1, c, init)
    }

    #[allow(clippy::too_many_arguments)]
    fn grouped(
        pb: &mut ParamBuilder,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
        init: Init,
    ) -> Self {
        let shape = [c_out, c_in / groups, k, k];
        let fan_in = c_in / groups * k * k;
        pb.scoped(name, |pb| {
            let weight = match init {
                Init::FanIn => pb.fan_in_uniform("weight", &shape, fan_in),
                Init::TruncNormal(std) => pb.trunc_normal("weight", &shape, std),
                Init::Zero => pb.zeros("weight", &shape),
            };
            let bias = match init {
                Init::FanIn => pb.fan_in_uniform("bias", &[c_out], fan_in),
                _ => pb.zeros("bias", &[c_out]),
            };
            Self {
                weight,
                bias,
                stride,
                pad: k / 2,
                groups,
            }
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        t.conv2d(x, w, Some(b), self.stride, self.pad, self.groups)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new(pb: &mut ParamBuilder, name: &str, d_in: usize, d_out: usize, init: Init) -> Self {
        pb.scoped(name, |pb| {
            let shape = [d_out, d_in];
            let weight = match init {
                Init::FanIn => pb.fan_in_uniform("weight", &shape, d_in),
                Init::TruncNormal(std) => pb.trunc_normal("weight", &shape, std),
                Init::Zero => pb.zeros("weight", &shape),
            };
            let bias = pb.zeros("bias", &[d_out]);
            Self { weight, bias }
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let w = t.param(self.weight);
        let b = t.param(self.bias);
        t.dense(x, w, Some(b))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gain: ParamId,
    shift: ParamId,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, d: usize) -> Self {
        pb.scoped(name, |pb| Self {
            gain: pb.constant("gain", &[d], 1.0),
            shift: pb.zeros("shift", &[d]),
        })
    }

    /// Normalise over the trailing axis.
    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let g = t.param(self.gain);
        let s = t.param(self.shift);
        t.layer_norm(x, g, s, LAYER_NORM_EPS)
    }
}

/// `[C, H, W]` feature map to `[H * W, C]` tokens.
pub fn to_tokens<T: Scalar>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = t.shape(x).to_vec();
    let p = t.permute(x, &[1, 2, 0])?;
    t.reshape(p, &[s[1] * s[2], s[0]])
}

/// Inverse of [`to_tokens`].
pub fn from_tokens<T: Scalar>(t: &mut Tape<T>, x: Var, h: usize, w: usize) -> Result<Var> {
    let c = t.shape(x)[1];
    let r = t.reshape(x, &[h, w, c])?;
    t.permute(r, &[2, 0, 1])
}

/// LayerNorm over the channel axis of a `[C, H, W]` map.
pub fn channel_norm<T: Scalar>(t: &mut Tape<T>, ln: &LayerNorm, x: Var) -> Result<Var> {
    let s = t.shape(x).to_vec();
    let tok = to_tokens(t, x)?;
    let y = ln.forward(t, tok)?;
    from_tokens(t, y, s[1], s[2])
}
