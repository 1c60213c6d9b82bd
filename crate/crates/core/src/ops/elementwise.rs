use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Standard normal CDF evaluated through `erfc` in double precision, which
/// keeps relative accuracy in the lower tail.
#[inline]
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    T::c(0.5 * libm::erfc(-x.f64() * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
pub fn normal_pdf<T: Scalar>(x: T) -> T {
    let x = x.f64();
    T::c((-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Round half away from zero.
#[inline]
pub fn round_half_away<T: Scalar>(x: T) -> T {
    x.round()
}

impl<T: Scalar> Tape<'_, T> {
    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, &[a, b], || {
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())])
        }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, &[a, b], || {
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|x| -x))])
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, &[a, b], || {
            Box::new(|g, inp, _| {
                vec![
                    Some(g.zip_map(inp[1], |g, y| g * y)),
                    Some(g.zip_map(inp[0], |g, x| g * x)),
                ]
            })
        }))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("div", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.push(v, &[a, b], || {
            Box::new(|g, inp, out| {
                let ga = g.zip_map(inp[1], |g, y| g / y);
                let mut gb = g.zip_map(out, |g, o| g * o);
                for (v, &y) in gb.data_mut().iter_mut().zip(inp[1].data()) {
                    *v = -*v / y;
                }
                vec![Some(ga), Some(gb)]
            })
        }))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::c(s);
        let v = self.value(a).map(|x| x * s);
        self.push(v, &[a], || Box::new(move |g, _, _| vec![Some(g.map(|x| x * s))]))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::c(s);
        let v = self.value(a).map(|x| x + s);
        self.push(v, &[a], || Box::new(|g, _, _| vec![Some(g.clone())]))
    }

    /// Elementwise op with derivative `df(x, y)` expressed through input and output.
    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var {
        let v = self.value(a).map(f);
        self.push(v, &[a], move || {
            Box::new(move |g, inp, out| {
                let data = g
                    .data()
                    .iter()
                    .zip(inp[0].data())
                    .zip(out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            })
        })
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Exact (erf) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x * normal_cdf(x),
            |x, _| normal_cdf(x) + x * normal_pdf(x),
        )
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s = T::c(slope);
        self.unary(
            a,
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, |x, _| sigmoid(x))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _| T::c(2.0) * x)
    }

    /// `max(x, bound)`. The gradient passes where `x >= bound`, or where it
    /// would push `x` back up above the bound. Under
    /// [`Tape::set_ste_identity`] only the first case applies, which is the
    /// exact derivative.
    pub fn lower_bound(&mut self, a: Var, bound: f64) -> Var {
        let b = T::c(bound);
        let pull_up = !self.ste_identity();
        let v = self.value(a).map(|x| x.max(b));
        self.push(v, &[a], move || {
            Box::new(move |g, inp, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(inp[0].data())
                    .map(|(&g, &x)| if x >= b || (pull_up && g < T::zero()) { g } else { T::zero() })
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            })
        })
    }

    /// Round half away from zero in the forward pass, identity gradient.
    pub fn round_ste(&mut self, a: Var) -> Var {
        let v = if self.ste_identity() {
            self.value(a).clone()
        } else {
            self.value(a).map(round_half_away)
        };
        self.push(v, &[a], || Box::new(|g, _, _| vec![Some(g.clone())]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, &[a], || {
            Box::new(|g, inp, _| vec![Some(Tensor::full(inp[0].shape(), g.item()))])
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `x + b` with `b` broadcast over the leading axes of `x`
    /// (`b.shape` must equal the trailing axes of `x.shape`).
    pub fn add_trailing(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return Err(Error::shape("add_trailing", format!("{xs:?} vs {bs:?}")));
        }
        let bv = self.value(b);
        let k = bv.numel();
        let mut v = self.value(x).clone();
        for chunk in v.data_mut().chunks_mut(k) {
            for (o, &bb) in chunk.iter_mut().zip(bv.data()) {
                *o = *o + bb;
            }
        }
        Ok(self.push(v, &[x, b], move || {
            Box::new(move |g, inp, _| {
                let mut gb = Tensor::zeros(inp[1].shape());
                for chunk in g.data().chunks(k) {
                    for (o, &gg) in gb.data_mut().iter_mut().zip(chunk) {
                        *o = *o + gg;
                    }
                }
                vec![Some(g.clone()), Some(gb)]
            })
        }))
    }

    /// `x * s` with `s` broadcast over the leading axes of `x`.
    pub fn mul_trailing(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xs, ss) = (self.shape(x), self.shape(s));
        if ss.len() > xs.len() || xs[xs.len() - ss.len()..] != *ss {
            return Err(Error::shape("mul_trailing", format!("{xs:?} vs {ss:?}")));
        }
        let sv = self.value(s);
        let k = sv.numel();
        let mut v = self.value(x).clone();
        for chunk in v.data_mut().chunks_mut(k) {
            for (o, &m) in chunk.iter_mut().zip(sv.data()) {
                *o = *o * m;
            }
        }
        Ok(self.push(v, &[x, s], move || {
            Box::new(move |g, inp, _| {
                let (xv, sv) = (inp[0], inp[1]);
                let mut gx = g.clone();
                let mut gs = Tensor::zeros(sv.shape());
                for ((gc, xc), gxc) in g
                    .data()
                    .chunks(k)
                    .zip(xv.data().chunks(k))
                    .zip(gx.data_mut().chunks_mut(k))
                {
                    for i in 0..k {
                        gxc[i] = gc[i] * sv.data()[i];
                        gs.data_mut()[i] = gs.data()[i] + gc[i] * xc[i];
                    }
                }
                vec![Some(gx), Some(gs)]
            })
        }))
    }
}
