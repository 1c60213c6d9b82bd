use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    groups: usize,
}

impl ConvGeom {
    /// Output positions `[lo, hi)` along one axis whose input tap `o*s + k - pad`
    /// lands inside `[0, n)`.
    fn valid(&self, k: usize, n: usize, out: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > k { (self.pad - k).div_ceil(s) } else { 0 };
        let top = n + self.pad;
        let hi = if top > k { ((top - k - 1) / s + 1).min(out) } else { 0 };
        (lo, hi.max(lo))
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    /// Visit every (input index, weight index, output index) triple.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        for b in 0..self.batch {
            for co in 0..self.c_out {
                let g = co / cout_g;
                let out_base = (b * self.c_out + co) * self.oh * self.ow;
                for cl in 0..cin_g {
                    let ci = g * cin_g + cl;
                    let in_base = (b * self.c_in + ci) * self.h * self.w;
                    for ky in 0..self.kh {
                        let (oy0, oy1) = self.valid(ky, self.h, self.oh);
                        for kx in 0..self.kw {
                            let (ox0, ox1) = self.valid(kx, self.w, self.ow);
                            let wi = ((co * cin_g + cl) * self.kh + ky) * self.kw + kx;
                            for oy in oy0..oy1 {
                                let iy = oy * self.stride + ky - self.pad;
                                let row_in = in_base + iy * self.w;
                                let row_out = out_base + oy * self.ow;
                                for ox in ox0..ox1 {
                                    let ix = ox * self.stride + kx - self.pad;
                                    f(row_in + ix, wi, row_out + ox);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<'_, T> {
    /// 2-D cross-correlation. `x` is `[C_in, H, W]` or `[B, C_in, H, W]`,
    /// `w` is `[C_out, C_in / groups, kH, kW]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (batch, c_in, h, wd) = match xs.as_slice() {
            &[c, h, w] => (1, c, h, w),
            &[b, c, h, w] => (b, c, h, w),
            _ => return Err(Error::shape("conv2d", format!("input rank {}: {xs:?}", xs.len()))),
        };
        if ws.len() != 4 {
            return Err(Error::shape("conv2d", format!("weight {ws:?}")));
        }
        if stride == 0 || groups == 0 {
            return Err(Error::InvalidArgument("conv2d stride and groups must be >= 1".into()));
        }
        let (c_out, kh, kw) = (ws[0], ws[2], ws[3]);
        if c_in % groups != 0 || c_out % groups != 0 || ws[1] != c_in / groups {
            return Err(Error::shape(
                "conv2d",
                format!("axis 1: input channels {c_in} / groups {groups} vs weight {ws:?}"),
            ));
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(
                "conv2d",
                format!("axes 2,3: padded input {}x{} smaller than kernel {kh}x{kw}", h + 2 * pad, wd + 2 * pad),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv2d", format!("bias {:?} vs {c_out}", self.shape(b))));
            }
        }
        let geom = ConvGeom {
            batch,
            c_in,
            h,
            w: wd,
            c_out,
            kh,
            kw,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
            stride,
            pad,
            groups,
        };
        let plane = geom.oh * geom.ow;
        let mut out = vec![T::zero(); batch * c_out * plane];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for (i, chunk) in out.chunks_mut(plane).enumerate() {
                chunk.fill(bv[i % c_out]);
            }
        }
        {
            let (xd, wdat) = (self.value(x).data(), self.value(w).data());
            geom.for_each_tap(|xi, wi, oi| out[oi] = out[oi] + wdat[wi] * xd[xi]);
        }
        let out_shape = if xs.len() == 3 {
            vec![c_out, geom.oh, geom.ow]
        } else {
            vec![batch, c_out, geom.oh, geom.ow]
        };
        let v = Tensor::from_parts(out_shape, out);
        let parents: Vec<Var> = [x, w].into_iter().chain(b).collect();
        let has_bias = b.is_some();
        Ok(self.push(v, &parents, move || {
            Box::new(move |g, inp, _| {
                let (xd, wdat, gd) = (inp[0].data(), inp[1].data(), g.data());
                let mut gx = vec![T::zero(); inp[0].numel()];
                let mut gw = vec![T::zero(); inp[1].numel()];
                geom.for_each_tap(|xi, wi, oi| {
                    let go = gd[oi];
                    gx[xi] = gx[xi] + wdat[wi] * go;
                    gw[wi] = gw[wi] + xd[xi] * go;
                });
                let mut grads = vec![
                    Some(Tensor::from_parts(inp[0].shape().to_vec(), gx)),
                    Some(Tensor::from_parts(inp[1].shape().to_vec(), gw)),
                ];
                if has_bias {
                    let mut gb = vec![T::zero(); c_out];
                    for (i, chunk) in gd.chunks(plane).enumerate() {
                        gb[i % c_out] = gb[i % c_out] + chunk.iter().copied().sum::<T>();
                    }
                    grads.push(Some(Tensor::from_parts(vec![c_out], gb)));
                }
                grads
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_counts_neighbours() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::ones(&[1, 4, 4]));
        let w = t.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = t.conv2d(x, w, None, 1, 1, 1).unwrap();
        #[rustfmt::skip]
        let want = [
            4.0, 6.0, 6.0, 4.0,
            6.0, 9.0, 9.0, 6.0,
            6.0, 9.0, 9.0, 6.0,
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(t.value(y).data(), &want);
    }

    #[test]
    fn identity_1x1() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::from_fn(&[3, 2, 5], |i| i as f32 - 7.0));
        let w = t.constant(Tensor::from_fn(&[3, 3, 1, 1], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let b = t.constant(Tensor::zeros(&[3]));
        let y = t.conv2d(x, w, Some(b), 1, 0, 1).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn stride_two_shape() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::ones(&[1, 4, 4]));
        let w = t.constant(Tensor::ones(&[2, 1, 3, 3]));
        let y = t.conv2d(x, w, None, 2, 1, 1).unwrap();
        assert_eq!(t.shape(y), &[2, 2, 2]);
    }

    #[test]
    fn same_padding_preserves_shape() {
        for h in 1..=32 {
            for w in [1, 5, 17, 32] {
                let mut t = Tape::<f32>::new();
                let x = t.constant(Tensor::ones(&[1, h, w]));
                let k = t.constant(Tensor::ones(&[1, 1, 3, 3]));
                let y = t.conv2d(x, k, None, 1, 1, 1).unwrap();
                assert_eq!(t.shape(y), &[1, h, w]);
            }
        }
    }

    #[test]
    fn shape_errors_name_axes() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::ones(&[2, 4, 4]));
        let w = t.constant(Tensor::ones(&[1, 3, 3, 3]));
        let err = t.conv2d(x, w, None, 1, 1, 1).unwrap_err();
        assert!(err.to_string().contains("axis 1"), "{err}");
        let w = t.constant(Tensor::ones(&[1, 2, 7, 7]));
        assert!(t.conv2d(x, w, None, 1, 1, 1).is_err());
    }

    #[test]
    fn depthwise_matches_per_channel() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_fn(&[2, 3, 3], |i| i as f64));
        let w = t.constant(Tensor::from_fn(&[2, 1, 3, 3], |i| if i < 9 { 1.0 } else { 0.0 }));
        let y = t.conv2d(x, w, None, 1, 1, 2).unwrap();
        // channel 1 has an all-zero kernel
        assert!(t.value(y).data()[9..].iter().all(|&v| v == 0.0));
        assert_eq!(t.value(y).data()[4], (0..9).sum::<usize>() as f64);
    }
}
