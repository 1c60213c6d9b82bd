use super::dct::{dct2, idct2};
use super::window::{window_merge, window_partition};
use crate::error::Result;
use crate::nn::{from_tokens, to_tokens, Conv2d, Dense, Init, LayerNorm};
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

const EXPANSION: usize = 2;

/// Adaptive frequency modulation: a token MLP between two LayerNorms, then
/// per-window DCT coefficients are reweighted by a depthwise 3x3 conv of
/// themselves and transformed back.
#[derive(Clone, Debug)]
pub struct Afmm {
    norm_in: LayerNorm,
    fc1: Dense,
    fc2: Dense,
    norm_out: LayerNorm,
    modulation: Conv2d,
    window: usize,
}

impl Afmm {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, window: usize) -> Self {
        pb.scoped(name, |pb| Self {
            norm_in: LayerNorm::new(pb, "norm_in", channels),
            fc1: Dense::new(pb, "fc1", channels, EXPANSION * channels, Init::TruncNormal(0.02)),
            fc2: Dense::new(pb, "fc2", EXPANSION * channels, channels, Init::TruncNormal(0.02)),
            norm_out: LayerNorm::new(pb, "norm_out", channels),
            modulation: Conv2d::depthwise(pb, "modulation", channels, 3, Init::Zero),
            window,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn modulation(&self) -> &Conv2d {
        &self.modulation
    }

    /// The spatial-domain activation path feeding the frequency stage.
    pub fn activation<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = t.shape(x).to_vec();
        let u = to_tokens(t, x)?;
        let u = self.norm_in.forward(t, u)?;
        let u = self.fc1.forward(t, u)?;
        let u = t.gelu(u);
        let u = self.fc2.forward(t, u)?;
        let u = self.norm_out.forward(t, u)?;
        from_tokens(t, u, s[1], s[2])
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let a = self.activation(t, x)?;
        modulate_windows(t, a, self.window, |t, f| self.modulation.forward(t, f))
    }
}

/// Partition `x: [C, H, W]` into windows, take each window's DCT `F`, multiply
/// by `weights(F)` elementwise, invert and merge.
pub fn modulate_windows<T: Scalar>(
    t: &mut Tape<T>,
    x: Var,
    window: usize,
    weights: impl FnOnce(&mut Tape<T>, Var) -> Result<Var>,
) -> Result<Var> {
    let (win, grid) = window_partition(t, x, window)?;
    let f = dct2(t, win)?;
    let w = weights(t, f)?;
    let g = t.mul(w, f)?;
    let back = idct2(t, g)?;
    window_merge(t, back, &grid)
}
