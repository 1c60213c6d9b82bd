use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Boundary handling for [`Tape::pad2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample, folded as often as needed so
    /// pads wider than the input are still defined.
    Reflect,
}

/// Source index of padded position `i` for an axis of length `n` under reflection.
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// `out[i] = data[src[i]]` for the permutation of a row-major tensor.
fn permute_index(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n: usize = shape.iter().product();
    let mut src = Vec::with_capacity(n);
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        let off: usize = (0..rank).map(|k| idx[k] * in_strides[axes[k]]).sum();
        src.push(off);
        for k in (0..rank).rev() {
            idx[k] += 1;
            if idx[k] < out_shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    (out_shape, src)
}

impl<T: Scalar> Tape<'_, T> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshape(shape)?;
        Ok(self.push(v, &[a], || {
            Box::new(|g, inp, _| {
                vec![Some(g.clone().reshape(inp[0].shape()).expect("same numel"))]
            })
        }))
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes.iter().any(|&ax| ax >= shape.len() || std::mem::replace(&mut seen[ax], true))
        {
            return Err(Error::shape("permute", format!("axes {axes:?} for {shape:?}")));
        }
        let (out_shape, src) = permute_index(&shape, axes);
        let data = self.value(a).data();
        let v = Tensor::from_parts(out_shape, src.iter().map(|&s| data[s]).collect());
        Ok(self.push(v, &[a], move || {
            Box::new(move |g, inp, _| {
                let mut gi = vec![T::zero(); g.numel()];
                for (o, &s) in src.iter().enumerate() {
                    gi[s] = g.data()[o];
                }
                vec![Some(Tensor::from_parts(inp[0].shape().to_vec(), gi))]
            })
        }))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {first:?}")));
        }
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape("concat", format!("{first:?} vs {s:?}")));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let d = self.value(p).data();
                data.extend_from_slice(&d[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let v = Tensor::from_parts(out_shape, data);
        Ok(self.push(v, parts, move || {
            Box::new(move |g, inp, _| {
                let mut outs: Vec<Vec<T>> =
                    sizes.iter().map(|&sz| Vec::with_capacity(outer * sz * inner)).collect();
                let gd = g.data();
                let mut off = 0;
                for _ in 0..outer {
                    for (buf, &sz) in outs.iter_mut().zip(&sizes) {
                        buf.extend_from_slice(&gd[off..off + sz * inner]);
                        off += sz * inner;
                    }
                }
                outs.into_iter()
                    .zip(inp)
                    .map(|(d, x)| Some(Tensor::from_parts(x.shape().to_vec(), d)))
                    .collect()
            })
        }))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("axis {axis} [{start}, {}) of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let n = shape[axis];
        let d = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let v = Tensor::from_parts(out_shape, data);
        Ok(self.push(v, &[a], move || {
            Box::new(move |g, _, _| {
                let mut gi = Tensor::zeros(&shape);
                let gd = g.data();
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    gi.data_mut()[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gi)]
            })
        }))
    }

    /// Pick rows along the leading axis: `out[i] = x[idx[i]]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (rows, row) = self.value(a).split_leading();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("gather_rows", format!("index {bad} >= {rows}")));
        }
        if idx.is_empty() {
            return Err(Error::shape("gather_rows", "empty index"));
        }
        let d = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * row);
        for &i in idx {
            data.extend_from_slice(&d[i * row..(i + 1) * row]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = idx.len();
        let v = Tensor::from_parts(out_shape, data);
        let idx = idx.to_vec();
        Ok(self.push(v, &[a], move || {
            Box::new(move |g, _, _| {
                let mut gi = Tensor::zeros(&shape);
                let gd = g.data();
                for (o, &i) in idx.iter().enumerate() {
                    let dst = &mut gi.data_mut()[i * row..(i + 1) * row];
                    for (d, &s) in dst.iter_mut().zip(&gd[o * row..(o + 1) * row]) {
                        *d = *d + s;
                    }
                }
                vec![Some(gi)]
            })
        }))
    }

    /// Pad the last two axes at the bottom/right to `(out_h, out_w)`.
    pub fn pad2d(&mut self, a: Var, out_h: usize, out_w: usize, mode: PadMode) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let r = shape.len();
        if r < 2 || out_h < shape[r - 2] || out_w < shape[r - 1] {
            return Err(Error::shape("pad2d", format!("{shape:?} -> ({out_h}, {out_w})")));
        }
        let (h, w) = (shape[r - 2], shape[r - 1]);
        if (h, w) == (out_h, out_w) {
            return Ok(a);
        }
        let planes: usize = shape[..r - 2].iter().product();
        // source offset within a plane, or None for zero padding
        let map: Vec<Option<usize>> = (0..out_h * out_w)
            .map(|i| {
                let (y, x) = (i / out_w, i % out_w);
                match mode {
                    PadMode::Zero => (y < h && x < w).then(|| y * w + x),
                    PadMode::Reflect => Some(reflect_index(y, h) * w + reflect_index(x, w)),
                }
            })
            .collect();
        let d = self.value(a).data();
        let mut data = Vec::with_capacity(planes * out_h * out_w);
        for p in 0..planes {
            let plane = &d[p * h * w..(p + 1) * h * w];
            data.extend(map.iter().map(|m| m.map_or(T::zero(), |s| plane[s])));
        }
        let mut out_shape = shape.clone();
        out_shape[r - 2] = out_h;
        out_shape[r - 1] = out_w;
        let v = Tensor::from_parts(out_shape, data);
        Ok(self.push(v, &[a], move || {
            Box::new(move |g, _, _| {
                let mut gi = Tensor::zeros(&shape);
                let gd = g.data();
                for p in 0..planes {
                    let src = &gd[p * out_h * out_w..(p + 1) * out_h * out_w];
                    let dst = &mut gi.data_mut()[p * h * w..(p + 1) * h * w];
                    for (m, &gv) in map.iter().zip(src) {
                        if let Some(s) = m {
                            dst[*s] = dst[*s] + gv;
                        }
                    }
                }
                vec![Some(gi)]
            })
        }))
    }

    /// Keep the top-left `(h, w)` of the last two axes.
    pub fn crop2d(&mut self, a: Var, h: usize, w: usize) -> Result<Var> {
        let r = self.shape(a).len();
        let a = self.narrow(a, r - 2, 0, h)?;
        self.narrow(a, r - 1, 0, w)
    }
}
