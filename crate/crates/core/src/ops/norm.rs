use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-6;

impl<T: Scalar> Tape<'_, T> {
    /// Normalise over the trailing axis, then apply `gain` and `shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let d = *self.shape(x).last().unwrap();
        if self.shape(gain) != [d] || self.shape(shift) != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "trailing dim {d} vs gain {:?} shift {:?}",
                    self.shape(gain),
                    self.shape(shift)
                ),
            ));
        }
        let eps = T::c(eps);
        let dn = T::c(d as f64);
        let (gv, sv) = (self.value(gain).data(), self.value(shift).data());
        let xd = self.value(x).data();
        let rows = xd.len() / d;
        let mut xhat = Vec::with_capacity(xd.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xd.len());
        for r in xd.chunks(d) {
            let mean = r.iter().copied().sum::<T>() / dn;
            let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (i, &v) in r.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * gv[i] + sv[i]);
            }
        }
        let v = Tensor::from_parts(self.shape(x).to_vec(), out);
        Ok(self.push(v, &[x, gain, shift], move || {
            Box::new(move |g, inp, _| {
                let gamma = inp[1].data();
                let mut gx = Vec::with_capacity(g.numel());
                let mut gg = vec![T::zero(); d];
                let mut gs = vec![T::zero(); d];
                for ((gr, hr), &is) in g.data().chunks(d).zip(xhat.chunks(d)).zip(&inv_std) {
                    let mut mean_gh = T::zero();
                    let mut mean_ghh = T::zero();
                    for i in 0..d {
                        let gh = gr[i] * gamma[i];
                        mean_gh = mean_gh + gh;
                        mean_ghh = mean_ghh + gh * hr[i];
                        gg[i] = gg[i] + gr[i] * hr[i];
                        gs[i] = gs[i] + gr[i];
                    }
                    mean_gh = mean_gh / dn;
                    mean_ghh = mean_ghh / dn;
                    for i in 0..d {
                        gx.push(is * (gr[i] * gamma[i] - mean_gh - hr[i] * mean_ghh));
                    }
                }
                vec![
                    Some(Tensor::from_parts(g.shape().to_vec(), gx)),
                    Some(Tensor::from_parts(vec![d], gg)),
                    Some(Tensor::from_parts(vec![d], gs)),
                ]
            })
        }))
    }
}
