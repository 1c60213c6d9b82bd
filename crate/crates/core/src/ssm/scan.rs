use rand::Rng;

use super::discretize::{zoh_gain, zoh_grad};
use crate::error::{Error, Result};
use crate::params::{ParamBuilder, ParamId};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

const DELTA_MIN: f64 = 1e-3;
const DELTA_MAX: f64 = 0.1;

/// Parameters of one selective scan over `C` channels with an `N`-dim state
/// per channel.
#[derive(Clone, Debug)]
pub struct SsmParams {
    /// `A = -exp(log_a)`, shape `[C, N]`.
    pub log_a: ParamId,
    /// Feed-through, `[C]`.
    pub d_skip: ParamId,
    /// `[C, C]`, no bias of its own.
    pub proj_delta: ParamId,
    pub delta_bias: ParamId,
    /// `[N, C]` maps from a token to its input and output state vectors.
    pub proj_b: ParamId,
    pub proj_c: ParamId,
    channels: usize,
    state: usize,
}

impl SsmParams {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, state: usize) -> Self {
        pb.scoped(name, |pb| {
            let log_a = pb.tensor(
                "log_a",
                Tensor::from_fn(&[channels, state], |i| ((i % state) as f32 + 1.0).ln()),
            );
            let d_skip = pb.constant("d", &[channels], 1.0);
            let proj_delta = pb.trunc_normal("proj_delta", &[channels, channels], 0.02);
            let (lo, hi) = (DELTA_MIN.ln(), DELTA_MAX.ln());
            let bias: Vec<f32> = (0..channels)
                .map(|_| {
                    let dt = pb.rng().random_range(lo..hi).exp();
                    // inverse softplus
                    (dt + (-(-dt).exp_m1()).ln()) as f32
                })
                .collect();
            let delta_bias = pb.tensor("delta_bias", Tensor::from_fn(&[channels], |i| bias[i]));
            let proj_b = pb.trunc_normal("proj_b", &[state, channels], 0.02);
            let proj_c = pb.trunc_normal("proj_c", &[state, channels], 0.02);
            Self {
                log_a,
                d_skip,
                proj_delta,
                delta_bias,
                proj_b,
                proj_c,
                channels,
                state,
            }
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Token-wise step sizes, input and output state vectors for `x: [L, C]`.
    pub fn projections<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<(Var, Var, Var)> {
        let wd = t.param(self.proj_delta);
        let bd = t.param(self.delta_bias);
        let raw = t.dense(x, wd, Some(bd))?;
        let delta = t.softplus(raw);
        let wb = t.param(self.proj_b);
        let b = t.dense(x, wb, None)?;
        let wc = t.param(self.proj_c);
        let c = t.dense(x, wc, None)?;
        Ok((delta, b, c))
    }

    /// Run the recurrence given precomputed projections.
    pub fn scan<T: Scalar>(&self, t: &mut Tape<T>, x: Var, delta: Var, b: Var, c: Var) -> Result<Var> {
        let log_a = t.param(self.log_a);
        let d = t.param(self.d_skip);
        t.selective_scan_raw(x, delta, b, c, log_a, d)
    }
}

/// Input-dependent scan of `x: [L, C]` from a zero state.
pub fn selective_scan<T: Scalar>(t: &mut Tape<T>, x: Var, params: &SsmParams) -> Result<Var> {
    let (delta, b, c) = params.projections(t, x)?;
    params.scan(t, x, delta, b, c)
}


impl<T: Scalar> Tape<'_, T> {
    /// Fused discretise-and-scan:
    /// `h_t = exp(delta_t a) h_{t-1} + gain(a, delta_t) b_t x_t`,
    /// `y_t = <c_t, h_t> + d x_t`, with `a = -exp(log_a)`.
    ///
    /// Shapes: `x, delta: [L, C]`, `b, c: [L, N]`, `log_a: [C, N]`, `d: [C]`.
    pub fn selective_scan_raw(
        &mut self,
        x: Var,
        delta: Var,
        b: Var,
        c: Var,
        log_a: Var,
        d: Var,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(Error::shape("selective_scan", format!("input {xs:?}, want [L, C]")));
        }
        let (len, ch) = (xs[0], xs[1]);
        let ls = self.shape(log_a).to_vec();
        if ls.len() != 2 || ls[0] != ch {
            return Err(Error::shape("selective_scan", format!("log_a {ls:?} vs C={ch}")));
        }
        let n = ls[1];
        let checks = [
            (delta, vec![len, ch], "delta"),
            (b, vec![len, n], "b"),
            (c, vec![len, n], "c"),
            (d, vec![ch], "d"),
        ];
        for (v, want, what) in checks {
            if self.shape(v) != want.as_slice() {
                return Err(Error::shape(
                    "selective_scan",
                    format!("{what} {:?}, want {want:?}", self.shape(v)),
                ));
            }
        }

        let a: Vec<T> = self.value(log_a).data().iter().map(|&v| -v.exp()).collect();
        let (xd, dd, bd, cd, skip) = (
            self.value(x).data(),
            self.value(delta).data(),
            self.value(b).data(),
            self.value(c).data(),
            self.value(d).data(),
        );
        let mut states = vec![T::zero(); len * ch * n];
        let mut h = vec![T::zero(); ch * n];
        let mut out = Vec::with_capacity(len * ch);
        for t in 0..len {
            let brow = &bd[t * n..(t + 1) * n];
            let crow = &cd[t * n..(t + 1) * n];
            for k in 0..ch {
                let xv = xd[t * ch + k];
                let dt = dd[t * ch + k];
                let mut acc = skip[k] * xv;
                for s in 0..n {
                    let i = k * n + s;
                    let (a_bar, gain) = zoh_gain(a[i], dt);
                    h[i] = a_bar * h[i] + gain * brow[s] * xv;
                    acc = acc + crow[s] * h[i];
                }
                out.push(acc);
            }
            states[t * ch * n..(t + 1) * ch * n].copy_from_slice(&h);
        }
        let value = Tensor::from_parts(vec![len, ch], out);
        Ok(self.push(value, &[x, delta, b, c, log_a, d], move || {
            Box::new(move |g, inp, _| {
                let (xd, dd, bd, cd, skip) =
                    (inp[0].data(), inp[1].data(), inp[2].data(), inp[3].data(), inp[5].data());
                let gd = g.data();
                let mut gx = vec![T::zero(); len * ch];
                let mut gdelta = vec![T::zero(); len * ch];
                let mut gb = vec![T::zero(); len * n];
                let mut gc = vec![T::zero(); len * n];
                let mut ga = vec![T::zero(); ch * n];
                let mut gskip = vec![T::zero(); ch];
                // gradient w.r.t. h_t arriving from step t+1
                let mut carry = vec![T::zero(); ch * n];
                for t in (0..len).rev() {
                    let h_t = &states[t * ch * n..(t + 1) * ch * n];
                    let h_prev = (t > 0).then(|| &states[(t - 1) * ch * n..t * ch * n]);
                    for k in 0..ch {
                        let gy = gd[t * ch + k];
                        let xv = xd[t * ch + k];
                        let dt = dd[t * ch + k];
                        let mut dx = skip[k] * gy;
                        gskip[k] = gskip[k] + gy * xv;
                        let mut ddt = T::zero();
                        for s in 0..n {
                            let i = k * n + s;
                            let z = zoh_grad(a[i], dt);
                            let bv = bd[t * n + s];
                            gc[t * n + s] = gc[t * n + s] + gy * h_t[i];
                            let dh = carry[i] + cd[t * n + s] * gy;
                            let d_abar = h_prev.map_or(T::zero(), |hp| dh * hp[i]);
                            let d_gain = dh * bv * xv;
                            gb[t * n + s] = gb[t * n + s] + dh * z.gain * xv;
                            dx = dx + dh * z.gain * bv;
                            ddt = ddt + d_abar * z.a_bar_d_delta + d_gain * z.gain_d_delta;
                            ga[i] = ga[i] + d_abar * z.a_bar_d_a + d_gain * z.gain_d_a;
                            carry[i] = dh * z.a_bar;
                        }
                        gx[t * ch + k] = dx;
                        gdelta[t * ch + k] = ddt;
                    }
                }
                let glog_a: Vec<T> = ga.iter().zip(&a).map(|(&g, &a)| g * a).collect();
                vec![
                    Some(Tensor::from_parts(vec![len, ch], gx)),
                    Some(Tensor::from_parts(vec![len, ch], gdelta)),
                    Some(Tensor::from_parts(vec![len, n], gb)),
                    Some(Tensor::from_parts(vec![len, n], gc)),
                    Some(Tensor::from_parts(vec![ch, n], glog_a)),
                    Some(Tensor::from_parts(vec![ch], gskip)),
                ]
            })
        }))
    }
}
