use crate::error::{Error, Result};
use crate::nn::{Dense, Init, LayerNorm};
use crate::ops::PadMode;
use crate::params::{ParamBuilder, ParamId};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

const MLP_RATIO: usize = 2;
const MASKED: f64 = -1e9;

/// Non-shifted window self-attention block with learned relative position
/// bias: `x + attn(LN(x))`, then `+ mlp(LN(.))`. Maps are zero-padded to a
/// multiple of the window and padded keys are masked out.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    norm1: LayerNorm,
    qkv: Dense,
    rel_bias: ParamId,
    proj: Dense,
    norm2: LayerNorm,
    fc1: Dense,
    fc2: Dense,
    channels: usize,
    heads: usize,
    window: usize,
}

/// Output of the block and its attention weights `[B * heads, w^2, w^2]`.
pub struct AttentionTrace {
    pub output: Var,
    pub weights: Var,
}

impl WindowAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, heads: usize, window: usize) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "{channels} channels not divisible by {heads} heads"
            )));
        }
        let span = 2 * window - 1;
        Ok(pb.scoped(name, |pb| Self {
            norm1: LayerNorm::new(pb, "norm1", channels),
            qkv: Dense::new(pb, "qkv", channels, 3 * channels, Init::TruncNormal(0.02)),
            rel_bias: pb.trunc_normal("rel_bias", &[span * span, heads], 0.02),
            proj: Dense::new(pb, "proj", channels, channels, Init::Zero),
            norm2: LayerNorm::new(pb, "norm2", channels),
            fc1: Dense::new(pb, "fc1", channels, MLP_RATIO * channels, Init::TruncNormal(0.02)),
            fc2: Dense::new(pb, "fc2", MLP_RATIO * channels, channels, Init::Zero),
            channels,
            heads,
            window,
        }))
    }

    pub fn qkv(&self) -> &Dense {
        &self.qkv
    }

    pub fn rel_bias(&self) -> ParamId {
        self.rel_bias
    }

    /// Row of the bias table for query `i` attending to key `j` (in-window
    /// row-major positions).
    fn rel_index(&self, i: usize, j: usize) -> usize {
        let w = self.window;
        let (r1, c1, r2, c2) = (i / w, i % w, j / w, j % w);
        (r1 + w - 1 - r2) * (2 * w - 1) + (c1 + w - 1 - c2)
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        Ok(self.forward_traced(t, x)?.output)
    }

    pub fn forward_traced<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<AttentionTrace> {
        let s = t.shape(x).to_vec();
        if s.len() != 3 || s[0] != self.channels {
            return Err(Error::shape(
                "window_attention",
                format!("axis 0: {s:?} vs {} channels", self.channels),
            ));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let win = self.window;
        let (nh, nw) = (h.div_ceil(win), w.div_ceil(win));
        let (ph, pw) = (nh * win, nw * win);
        let (b, l, heads) = (nh * nw, win * win, self.heads);
        let dh = c / heads;

        let p = t.pad2d(x, ph, pw, PadMode::Zero)?;
        let u = t.reshape(p, &[c, nh, win, nw, win])?;
        let u = t.permute(u, &[1, 3, 2, 4, 0])?;
        let tokens = t.reshape(u, &[b, l, c])?;

        let n = self.norm1.forward(t, tokens)?;
        let qkv = self.qkv.forward(t, n)?;
        let qkv = t.reshape(qkv, &[b, l, 3, heads, dh])?;
        let qkv = t.permute(qkv, &[2, 0, 3, 1, 4])?;
        let part = |t: &mut Tape<T>, k: usize| -> Result<Var> {
            let v = t.narrow(qkv, 0, k, 1)?;
            t.reshape(v, &[b * heads, l, dh])
        };
        let q = part(t, 0)?;
        let k = part(t, 1)?;
        let v = part(t, 2)?;
        let q = t.scale(q, 1.0 / (dh as f64).sqrt());
        let kt = t.permute(k, &[0, 2, 1])?;
        let scores = t.matmul(q, kt)?;

        let idx: Vec<usize> = (0..l * l).map(|ij| self.rel_index(ij / l, ij % l)).collect();
        let table = t.param(self.rel_bias);
        let bias = t.gather_rows(table, &idx)?;
        let bias = t.permute(bias, &[1, 0])?;
        let bias = t.reshape(bias, &[heads * l * l])?;
        let scores = t.reshape(scores, &[b, heads * l * l])?;
        let mut scores = t.add_trailing(scores, bias)?;
        if ph != h || pw != w {
            let mask = Tensor::from_fn(&[b, heads * l * l], |i| {
                let win_idx = i / (heads * l * l);
                let key = i % l;
                let (r, col) = (
                    (win_idx / nw) * win + key / win,
                    (win_idx % nw) * win + key % win,
                );
                if r >= h || col >= w {
                    T::c(MASKED)
                } else {
                    T::zero()
                }
            });
            let mask = t.constant(mask);
            scores = t.add(scores, mask)?;
        }
        let scores = t.reshape(scores, &[b * heads, l, l])?;
        let weights = t.softmax_last(scores);
        let ctx = t.matmul(weights, v)?;
        let ctx = t.reshape(ctx, &[b, heads, l, dh])?;
        let ctx = t.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = t.reshape(ctx, &[b, l, c])?;
        let attn = self.proj.forward(t, ctx)?;
        let x1 = t.add(tokens, attn)?;

        let n2 = self.norm2.forward(t, x1)?;
        let m = self.fc1.forward(t, n2)?;
        let m = t.gelu(m);
        let m = self.fc2.forward(t, m)?;
        let x2 = t.add(x1, m)?;

        let u = t.reshape(x2, &[nh, nw, win, win, c])?;
        let u = t.permute(u, &[4, 0, 2, 1, 3])?;
        let u = t.reshape(u, &[c, ph, pw])?;
        let output = t.crop2d(u, h, w)?;
        Ok(AttentionTrace { output, weights })
    }
}
