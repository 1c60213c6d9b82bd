use super::orders::{build_scan_orders, ScanKind};
use super::scan::SsmParams;
use crate::error::Result;
use crate::nn::{from_tokens, to_tokens, Conv2d, Dense, Init, LayerNorm};
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// Eight-direction selective scan over a 2-D map. The two directions of a
/// path type share one [`SsmParams`]; outputs are summed.
#[derive(Clone, Debug)]
pub struct Vonssm {
    paths: [SsmParams; 4],
}

impl Vonssm {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, state: usize) -> Self {
        pb.scoped(name, |pb| Self {
            paths: ScanKind::ALL.map(|k| SsmParams::new(pb, k.name(), channels, state)),
        })
    }

    pub fn path(&self, kind: ScanKind) -> &SsmParams {
        &self.paths[kind.index()]
    }

    /// `tokens: [H * W, C]` in row-major pixel order.
    pub fn forward_tokens<T: Scalar>(
        &self,
        t: &mut Tape<T>,
        tokens: Var,
        h: usize,
        w: usize,
    ) -> Result<Var> {
        let orders = build_scan_orders(h, w);
        let mut acc: Option<Var> = None;
        for pair in orders.chunks(2) {
            let params = self.path(pair[0].kind);
            // projections are per token, so compute once and reorder
            let (delta, b, c) = params.projections(t, tokens)?;
            for order in pair {
                let xs = t.gather_rows(tokens, &order.perm)?;
                let ds = t.gather_rows(delta, &order.perm)?;
                let bs = t.gather_rows(b, &order.perm)?;
                let cs = t.gather_rows(c, &order.perm)?;
                let ys = params.scan(t, xs, ds, bs, cs)?;
                let y = t.gather_rows(ys, &order.inverse())?;
                acc = Some(match acc {
                    Some(a) => t.add(a, y)?,
                    None => y,
                });
            }
        }
        Ok(acc.expect("eight orders"))
    }

    /// `x: [C, H, W]`.
    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = t.shape(x).to_vec();
        let tok = to_tokens(t, x)?;
        let y = self.forward_tokens(t, tok, s[1], s[2])?;
        from_tokens(t, y, s[1], s[2])
    }
}

/// Linear, depthwise 3x3 conv, SiLU, omni-directional scan, LayerNorm,
/// Linear. Channel width is preserved throughout.
#[derive(Clone, Debug)]
pub struct VonssBlock {
    in_proj: Dense,
    dwconv: Conv2d,
    ssm: Vonssm,
    norm: LayerNorm,
    out_proj: Dense,
}

impl VonssBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, state: usize) -> Self {
        pb.scoped(name, |pb| Self {
            in_proj: Dense::new(pb, "in_proj", channels, channels, Init::TruncNormal(0.02)),
            dwconv: Conv2d::depthwise(pb, "dwconv", channels, 3, Init::FanIn),
            ssm: Vonssm::new(pb, "vonss", channels, state),
            norm: LayerNorm::new(pb, "norm", channels),
            out_proj: Dense::new(pb, "out_proj", channels, channels, Init::Zero),
        })
    }

    pub fn out_proj(&self) -> &Dense {
        &self.out_proj
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = t.shape(x).to_vec();
        let (h, w) = (s[1], s[2]);
        let tok = to_tokens(t, x)?;
        let u = self.in_proj.forward(t, tok)?;
        let u = from_tokens(t, u, h, w)?;
        let u = self.dwconv.forward(t, u)?;
        let u = t.silu(u);
        let u = to_tokens(t, u)?;
        let u = self.ssm.forward_tokens(t, u, h, w)?;
        let u = self.norm.forward(t, u)?;
        let u = self.out_proj.forward(t, u)?;
        from_tokens(t, u, h, w)
    }
}
