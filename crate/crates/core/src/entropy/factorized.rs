use rand::Rng;

use super::gaussian::P_FLOOR;
use crate::error::{Error, Result};
use crate::params::{ParamBuilder, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Widths of the per-channel CDF network, input to output.
const FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const INIT_SCALE: f64 = 10.0;

/// Per-channel learned density for the hyper-latent. Each channel owns a
/// small monotone network `R -> R` whose sigmoid is the CDF.
#[derive(Clone, Debug)]
pub struct FactorizedDensity {
    channels: usize,
    /// `[C, out, in]`, made positive by softplus.
    matrices: Vec<ParamId>,
    /// `[C, out]`.
    biases: Vec<ParamId>,
    /// `[C, out]`, squashed by tanh; one per stage except the last.
    factors: Vec<ParamId>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FactorizedDensity {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        let stages = FILTERS.len() - 1;
        let scale = INIT_SCALE.powf(1.0 / stages as f64);
        pb.scoped(name, |pb| {
            let mut s = Self {
                channels,
                matrices: Vec::new(),
                biases: Vec::new(),
                factors: Vec::new(),
            };
            for i in 0..stages {
                let (d_in, d_out) = (FILTERS[i], FILTERS[i + 1]);
                let init = (1.0 / scale / d_out as f64).exp_m1().ln() as f32;
                s.matrices.push(pb.constant(&format!("matrix{i}"), &[channels, d_out, d_in], init));
                let bias = {
                    let rng = pb.rng();
                    Tensor::from_fn(&[channels, d_out], |_| rng.random_range(-0.5f32..0.5))
                };
                s.biases.push(pb.tensor(&format!("bias{i}"), bias));
                if i + 1 < stages {
                    s.factors.push(pb.zeros(&format!("factor{i}"), &[channels, d_out]));
                }
            }
            s
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// CDF logits at `x: [C, P]`, returning `[C, P]`.
    pub fn logits<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let shape = t.shape(x).to_vec();
        if shape.len() != 2 || shape[0] != self.channels {
            return Err(Error::shape(
                "factorized logits",
                format!("expected [{}, P], got {shape:?}", self.channels),
            ));
        }
        let mut h = t.reshape(x, &[shape[0], shape[1], 1])?;
        for i in 0..self.matrices.len() {
            let m = t.param(self.matrices[i]);
            let m = t.softplus(m);
            let m = t.permute(m, &[0, 2, 1])?;
            h = t.matmul(h, m)?;
            // [P, C, out] so per-channel vectors broadcast as trailing axes
            h = t.permute(h, &[1, 0, 2])?;
            let b = t.param(self.biases[i]);
            h = t.add_trailing(h, b)?;
            if let Some(&f) = self.factors.get(i) {
                let f = t.param(f);
                let f = t.tanh(f);
                let g = t.tanh(h);
                let g = t.mul_trailing(g, f)?;
                h = t.add(h, g)?;
            }
            h = t.permute(h, &[1, 0, 2])?;
        }
        t.reshape(h, &shape)
    }

    /// Floored bin likelihood of `x: [C, ...]` on unit bins centred at `x`.
    pub fn likelihood<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let shape = t.shape(x).to_vec();
        let p: usize = shape[1..].iter().product();
        let flat = t.reshape(x, &[shape[0], p])?;
        let lo = t.add_scalar(flat, -0.5);
        let hi = t.add_scalar(flat, 0.5);
        let both = t.concat(&[lo, hi], 1)?;
        let l = self.logits(t, both)?;
        let lo = t.narrow(l, 1, 0, p)?;
        let hi = t.narrow(l, 1, p, p)?;
        // Difference taken on the side where both sigmoids are small.
        let sign = t.value(lo).zip_map(t.value(hi), |a, b| {
            if a + b > T::zero() { -T::one() } else { T::one() }
        });
        let sign = t.constant(sign);
        let shi = t.mul(hi, sign)?;
        let slo = t.mul(lo, sign)?;
        let shi = t.sigmoid(shi);
        let slo = t.sigmoid(slo);
        let d = t.sub(shi, slo)?;
        let d = t.mul(d, sign)?;
        let d = t.lower_bound(d, P_FLOOR);
        t.reshape(d, &shape)
    }

    /// CDF logit of channel `c` at `x`, evaluated in `f64` from `store`.
    pub fn logit<T: Scalar>(&self, store: &ParamStore<T>, c: usize, x: f64) -> f64 {
        let mut h = vec![x];
        for i in 0..self.matrices.len() {
            let (d_in, d_out) = (FILTERS[i], FILTERS[i + 1]);
            let m = &store.value(self.matrices[i]).data()[c * d_out * d_in..(c + 1) * d_out * d_in];
            let b = &store.value(self.biases[i]).data()[c * d_out..(c + 1) * d_out];
            let mut next = vec![0.0; d_out];
            for (o, v) in next.iter_mut().enumerate() {
                *v = b[o].f64() + (0..d_in).map(|j| softplus(m[o * d_in + j].f64()) * h[j]).sum::<f64>();
            }
            if let Some(&f) = self.factors.get(i) {
                let f = &store.value(f).data()[c * d_out..(c + 1) * d_out];
                for (v, &a) in next.iter_mut().zip(f) {
                    *v += a.f64().tanh() * v.tanh();
                }
            }
            h = next;
        }
        h[0]
    }

    pub fn cdf<T: Scalar>(&self, store: &ParamStore<T>, c: usize, x: f64) -> f64 {
        sigmoid(self.logit(store, c, x))
    }

    /// Floored mass of channel `c` on `[x - 1/2, x + 1/2]`.
    pub fn bin_prob<T: Scalar>(&self, store: &ParamStore<T>, c: usize, x: f64) -> f64 {
        self.bin_prob_raw(store, c, x).max(P_FLOOR)
    }

    pub fn bin_prob_raw<T: Scalar>(&self, store: &ParamStore<T>, c: usize, x: f64) -> f64 {
        let lo = self.logit(store, c, x - 0.5);
        let hi = self.logit(store, c, x + 0.5);
        let s = if lo + hi > 0.0 { -1.0 } else { 1.0 };
        s * (sigmoid(s * hi) - sigmoid(s * lo))
    }

    /// Per-channel medians (the point where the CDF is one half), found by
    /// bisection on the logit.
    pub fn medians<T: Scalar>(&self, store: &ParamStore<T>) -> Vec<f64> {
        (0..self.channels)
            .map(|c| {
                let f = |x| self.logit(store, c, x);
                let (mut lo, mut hi) = (-1.0, 1.0);
                while f(lo) > 0.0 && lo > -1e6 {
                    lo *= 2.0;
                }
                while f(hi) < 0.0 && hi < 1e6 {
                    hi *= 2.0;
                }
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check_with_params, random_projection, CheckConfig};
    use crate::params::randomize;

    fn model(channels: usize, seed: u64) -> (ParamStore, FactorizedDensity) {
        let mut store = ParamStore::new();
        let fd = FactorizedDensity::new(&mut ParamBuilder::new(&mut store, seed), "fd", channels);
        (store, fd)
    }

    #[test]
    fn tape_and_scalar_logits_agree() {
        let (mut store, fd) = model(3, 1);
        randomize(&mut store, 2, 0.7);
        let store = store.cast::<f64>();
        let xs: Vec<f64> = (0..15).map(|i| i as f64 * 0.9 - 6.0).collect();
        let mut t = Tape::inference(&store);
        let x = t.constant(Tensor::from_f64(&[3, 5], &xs).unwrap());
        let l = fd.logits(&mut t, x).unwrap();
        for (i, &v) in t.value(l).data().iter().enumerate() {
            assert!((v - fd.logit(&store, i / 5, xs[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn medians_zero_the_logit() {
        let (mut store, fd) = model(4, 3);
        randomize(&mut store, 4, 0.5);
        for (c, m) in fd.medians(&store).into_iter().enumerate() {
            assert!((fd.cdf(&store, c, m) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn likelihood_matches_scalar_bins() {
        let (store, fd) = model(2, 5);
        let store = store.cast::<f64>();
        let xs = [0.0, 1.0, -3.0, 7.5, 2.0, -0.4];
        let mut t = Tape::inference(&store);
        let x = t.constant(Tensor::from_f64(&[2, 3], &xs).unwrap());
        let p = fd.likelihood(&mut t, x).unwrap();
        for (i, &v) in t.value(p).data().iter().enumerate() {
            assert!((v - fd.bin_prob(&store, i / 3, xs[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients() {
        let (mut store, fd) = model(2, 7);
        randomize(&mut store, 8, 0.5);
        let mut store = store.cast::<f64>();
        let x = Tensor::from_f64(&[2, 3], &[0.2, -1.1, 0.7, 1.4, -0.3, 0.05]).unwrap();
        let r = grad_check_with_params(&mut store, &x, &CheckConfig::richardson(), |t, x| {
            let p = fd.likelihood(t, x)?;
            let l = t.ln(p);
            random_projection(t, l, 1)
        })
        .unwrap();
        assert!(r.max() < 1e-6, "{r:?}");
    }
}
