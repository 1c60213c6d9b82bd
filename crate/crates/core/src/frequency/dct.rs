use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Orthonormal type-II DCT matrix, row-major `[k, n]`.
pub fn dct_basis(w: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(w * w);
    let n = w as f64;
    for k in 0..w {
        let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..w {
            d.push(s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos());
        }
    }
    d
}

fn swap_last_two<T: Scalar>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let r = t.shape(x).len();
    let mut axes: Vec<usize> = (0..r).collect();
    axes.swap(r - 2, r - 1);
    t.permute(x, &axes)
}

/// `M X M^T` over the last two axes.
fn sandwich<T: Scalar>(t: &mut Tape<T>, x: Var, m: &[f64], w: usize) -> Result<Var> {
    let s = t.shape(x);
    if s.len() < 2 || s[s.len() - 1] != w || s[s.len() - 2] != w {
        return Err(Error::shape("dct2", format!("{s:?}, want [..., {w}, {w}]")));
    }
    // right factor M^T, as a [w, w] row-major matrix
    let mt = Tensor::from_fn(&[w, w], |i| T::c(m[(i % w) * w + i / w]));
    let mt = t.constant(mt);
    let a = t.matmul(x, mt)?;
    let a = swap_last_two(t, a)?;
    let b = t.matmul(a, mt)?;
    swap_last_two(t, b)
}

/// Separable orthonormal DCT-II over the last two (square) axes.
pub fn dct2<T: Scalar>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let w = *t.shape(x).last().unwrap();
    sandwich(t, x, &dct_basis(w), w)
}

/// Inverse of [`dct2`] (orthonormal DCT-III).
pub fn idct2<T: Scalar>(t: &mut Tape<T>, x: Var) -> Result<Var> {
    let w = *t.shape(x).last().unwrap();
    let d = dct_basis(w);
    let dt: Vec<f64> = (0..w * w).map(|i| d[(i % w) * w + i / w]).collect();
    sandwich(t, x, &dt, w)
}
