use super::attention::WindowAttention;
use crate::error::Result;
use crate::frequency::Afmm;
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// Window attention followed by residual frequency modulation.
#[derive(Clone, Debug)]
pub struct Fstam {
    attn: WindowAttention,
    afmm: Afmm,
}

impl Fstam {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, heads: usize, window: usize) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(Self {
                attn: WindowAttention::new(pb, "attn", channels, heads, window)?,
                afmm: Afmm::new(pb, "afmm", channels, window),
            })
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let a = self.attn.forward(t, x)?;
        let f = self.afmm.forward(t, a)?;
        t.add(a, f)
    }
}
