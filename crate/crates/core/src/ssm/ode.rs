use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// An input-independent SSM: step size per channel and one shared input /
/// output state vector, as if every projection were frozen.
#[derive(Clone, Debug)]
pub struct FrozenSsm {
    /// `[C, N]`, strictly negative.
    pub a: Vec<f64>,
    /// `[C]`, strictly positive.
    pub delta: Vec<f64>,
    /// `[N]`
    pub b: Vec<f64>,
    /// `[N]`
    pub c: Vec<f64>,
    /// `[C]`
    pub d: Vec<f64>,
}

impl FrozenSsm {
    pub fn channels(&self) -> usize {
        self.delta.len()
    }

    pub fn state(&self) -> usize {
        self.b.len()
    }

    fn check(&self, seq: &Tensor<f64>) -> Result<(usize, usize, usize)> {
        let (ch, n) = (self.channels(), self.state());
        if seq.rank() != 2 || seq.shape()[1] != ch {
            return Err(Error::shape("frozen ssm", format!("{:?} vs C={ch}", seq.shape())));
        }
        if self.a.len() != ch * n || self.c.len() != n || self.d.len() != ch {
            return Err(Error::InvalidArgument("frozen ssm parameter sizes disagree".into()));
        }
        if self.a.iter().any(|&a| a >= 0.0) || self.delta.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidArgument("need a < 0 and delta > 0".into()));
        }
        Ok((seq.shape()[0], ch, n))
    }

    /// Run the discrete recurrence through [`Tape::selective_scan_raw`] by
    /// broadcasting the frozen values over every token.
    pub fn scan(&self, seq: &Tensor<f64>) -> Result<Tensor<f64>> {
        let (len, ch, n) = self.check(seq)?;
        let mut t = Tape::<f64>::new();
        let x = t.constant(seq.clone());
        let delta = t.constant(Tensor::from_fn(&[len, ch], |i| self.delta[i % ch]));
        let b = t.constant(Tensor::from_fn(&[len, n], |i| self.b[i % n]));
        let c = t.constant(Tensor::from_fn(&[len, n], |i| self.c[i % n]));
        let log_a = t.constant(Tensor::from_fn(&[ch, n], |i| (-self.a[i]).ln()));
        let d = t.constant(Tensor::from_fn(&[ch], |i| self.d[i]));
        let y = t.selective_scan_raw(x, delta, b, c, log_a, d)?;
        Ok(t.value(y).clone())
    }
}

/// Integrate the continuous system `h' = a h + b x(t)` with classical
/// fourth-order Runge-Kutta, holding each token's input constant over its
/// interval of length `delta`, and read out `y = <c, h> + d x` at interval
/// ends. Test oracle for the discrete recurrence.
pub fn ode_reference(seq: &Tensor<f64>, params: &FrozenSsm, substeps: usize) -> Result<Tensor<f64>> {
    let (len, ch, n) = params.check(seq)?;
    let substeps = substeps.max(1);
    let xd = seq.data();
    let mut out = Vec::with_capacity(len * ch);
    let mut h = vec![0.0f64; ch * n];
    for t in 0..len {
        for k in 0..ch {
            let xv = xd[t * ch + k];
            let step = params.delta[k] / substeps as f64;
            let mut y = params.d[k] * xv;
            for s in 0..n {
                let a = params.a[k * n + s];
                let drive = params.b[s] * xv;
                let f = |h: f64| a * h + drive;
                let mut hv = h[k * n + s];
                for _ in 0..substeps {
                    let k1 = f(hv);
                    let k2 = f(hv + 0.5 * step * k1);
                    let k3 = f(hv + 0.5 * step * k2);
                    let k4 = f(hv + step * k3);
                    hv += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                h[k * n + s] = hv;
                y += params.c[s] * hv;
            }
            out.push(y);
        }
    }
    Tensor::new(&[len, ch], out)
}
