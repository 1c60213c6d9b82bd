use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// `c[m, n] += a[m, k] * b[k, n]` on row-major slices.
pub(crate) fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c[m, n] += a[m, k] * b[n, k]` (right operand transposed).
pub(crate) fn gemm_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s = s + x * y;
            }
            c[i * n + j] = c[i * n + j] + s;
        }
    }
}

/// `c[k, n] += a[m, k]^T * b[m, n]` (left operand transposed).
pub(crate) fn gemm_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

impl<T: Scalar> Tape<'_, T> {
    /// Affine map along the trailing axis: `x[..., in] -> x W^T + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let d_in = *xs.last().unwrap();
        if ws.len() != 2 || ws[1] != d_in {
            return Err(Error::shape(
                "dense",
                format!("input trailing dim {d_in} vs weight {ws:?}"),
            ));
        }
        let d_out = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [d_out] {
                return Err(Error::shape(
                    "dense",
                    format!("bias {:?} vs out dim {d_out}", self.shape(b)),
                ));
            }
        }
        let rows = self.value(x).numel() / d_in;
        let mut out = vec![T::zero(); rows * d_out];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for r in out.chunks_mut(d_out) {
                r.copy_from_slice(bv);
            }
        }
        gemm_nt_acc(self.value(x).data(), self.value(w).data(), &mut out, rows, d_in, d_out);
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = d_out;
        let v = Tensor::from_parts(out_shape, out);
        let parents: Vec<Var> = std::iter::once(x).chain(std::iter::once(w)).chain(b).collect();
        let has_bias = b.is_some();
        Ok(self.push(v, &parents, move || {
            Box::new(move |g, inp, _| {
                let (xv, wv) = (inp[0], inp[1]);
                let gd = g.data();
                let mut gx = vec![T::zero(); rows * d_in];
                gemm_acc(gd, wv.data(), &mut gx, rows, d_out, d_in);
                let mut gw = vec![T::zero(); d_out * d_in];
                gemm_tn_acc(gd, xv.data(), &mut gw, rows, d_out, d_in);
                let mut grads = vec![
                    Some(Tensor::from_parts(xv.shape().to_vec(), gx)),
                    Some(Tensor::from_parts(wv.shape().to_vec(), gw)),
                ];
                if has_bias {
                    let mut gb = vec![T::zero(); d_out];
                    for r in gd.chunks(d_out) {
                        for (o, &v) in gb.iter_mut().zip(r) {
                            *o = *o + v;
                        }
                    }
                    grads.push(Some(Tensor::from_parts(vec![d_out], gb)));
                }
                grads
            })
        }))
    }

    /// Batched matrix product. `a: [..., M, K]`, `b: [..., K, N]` with equal
    /// batch axes, or `b: [K, N]` shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let as_ = self.shape(a).to_vec();
        let bs = self.shape(b).to_vec();
        if as_.len() < 2 || bs.len() < 2 {
            return Err(Error::shape("matmul", format!("{as_:?} x {bs:?}")));
        }
        let (m, k) = (as_[as_.len() - 2], as_[as_.len() - 1]);
        let (k2, n) = (bs[bs.len() - 2], bs[bs.len() - 1]);
        let broadcast_b = bs.len() == 2 && as_.len() > 2;
        let batch_ok = broadcast_b || as_[..as_.len() - 2] == bs[..bs.len() - 2];
        if k != k2 || !batch_ok {
            return Err(Error::shape("matmul", format!("{as_:?} x {bs:?}")));
        }
        let batch: usize = as_[..as_.len() - 2].iter().product();
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (ad, bd) = (self.value(a).data(), self.value(b).data());
            for i in 0..batch {
                let bsl = if broadcast_b { bd } else { &bd[i * k * n..(i + 1) * k * n] };
                gemm_acc(
                    &ad[i * m * k..(i + 1) * m * k],
                    bsl,
                    &mut out[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let mut out_shape = as_.clone();
        *out_shape.last_mut().unwrap() = n;
        let v = Tensor::from_parts(out_shape, out);
        Ok(self.push(v, &[a, b], move || {
            Box::new(move |g, inp, _| {
                let (ad, bd, gd) = (inp[0].data(), inp[1].data(), g.data());
                let mut ga = vec![T::zero(); batch * m * k];
                let mut gb = vec![T::zero(); inp[1].numel()];
                for i in 0..batch {
                    let boff = if broadcast_b { 0 } else { i * k * n };
                    let gsl = &gd[i * m * n..(i + 1) * m * n];
                    gemm_nt_acc(gsl, &bd[boff..boff + k * n], &mut ga[i * m * k..(i + 1) * m * k], m, n, k);
                    gemm_tn_acc(&ad[i * m * k..(i + 1) * m * k], gsl, &mut gb[boff..boff + k * n], m, k, n);
                }
                vec![
                    Some(Tensor::from_parts(inp[0].shape().to_vec(), ga)),
                    Some(Tensor::from_parts(inp[1].shape().to_vec(), gb)),
                ]
            })
        }))
    }

    pub fn softmax_last(&mut self, a: Var) -> Var {
        let (rows, d) = self.value(a).split_trailing();
        let mut out = self.value(a).data().to_vec();
        for r in out.chunks_mut(d) {
            let mx = r.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut s = T::zero();
            for v in r.iter_mut() {
                *v = (*v - mx).exp();
                s = s + *v;
            }
            for v in r.iter_mut() {
                *v = *v / s;
            }
        }
        debug_assert_eq!(out.len(), rows * d);
        let v = Tensor::from_parts(self.shape(a).to_vec(), out);
        self.push(v, &[a], move || {
            Box::new(move |g, _, y| {
                let mut gx = Vec::with_capacity(g.numel());
                for (gr, yr) in g.data().chunks(d).zip(y.data().chunks(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    gx.extend(gr.iter().zip(yr).map(|(&gv, &yv)| yv * (gv - dot)));
                }
                vec![Some(Tensor::from_parts(g.shape().to_vec(), gx))]
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_hand_example() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::from_f64(&[2, 2], &[1.0, 1.0, 1.0, -1.0]).unwrap());
        let b = t.constant(Tensor::zeros(&[2]));
        let y = t.dense(x, w, Some(b)).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, -1.0]);
    }

    #[test]
    fn dense_identity_and_batch_shape() {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::from_fn(&[2, 3, 4], |i| i as f32 * 0.1));
        let eye = t.constant(Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 }));
        let y = t.dense(x, eye, None).unwrap();
        assert_eq!(t.value(y), t.value(x));
        let w = t.constant(Tensor::zeros(&[5, 4]));
        let y = t.dense(x, w, None).unwrap();
        assert_eq!(t.shape(y), &[2, 3, 5]);
        let bad = t.constant(Tensor::zeros(&[5, 3]));
        assert!(matches!(t.dense(x, bad, None), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_broadcast_right() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::from_fn(&[2, 1, 2], |i| i as f64 + 1.0));
        let b = t.constant(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 2.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 4.0, 3.0, 8.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::from_fn(&[3, 5], |i| (i as f64 * 0.7).sin() * 4.0));
        let s = t.softmax_last(a);
        for r in t.value(s).data().chunks(5) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
