use crate::error::{Error, Result};
use crate::ops::{normal_cdf, normal_pdf};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Lower bound applied to predicted scales.
pub const SIGMA_FLOOR: f64 = 0.04;
/// Lower bound on any modelled bin probability, matching 16-bit coder totals.
pub const P_FLOOR: f64 = 1.0 / 65536.0;

/// Mass of `N(mu, sigma^2)` on `[k - 1/2, k + 1/2]`, without flooring.
///
/// Evaluated on the side of the mean where both CDF values are small, so
/// far-tail bins keep their relative precision.
pub fn gaussian_bin_prob_raw(k: f64, mu: f64, sigma: f64) -> f64 {
    let a = (k - mu).abs();
    normal_cdf((0.5 - a) / sigma) - normal_cdf((-0.5 - a) / sigma)
}

/// [`gaussian_bin_prob_raw`] floored at [`P_FLOOR`].
pub fn gaussian_bin_prob(k: f64, mu: f64, sigma: f64) -> f64 {
    gaussian_bin_prob_raw(k, mu, sigma).max(P_FLOOR)
}

impl<T: Scalar> Tape<'_, T> {
    /// Bin mass of a zero-mean Gaussian at offsets `v` with scales `sigma`,
    /// unfloored. Both inputs are differentiable.
    pub fn gaussian_bin_mass(&mut self, v: Var, sigma: Var) -> Result<Var> {
        if self.shape(v) != self.shape(sigma) {
            return Err(Error::shape(
                "gaussian_bin_mass",
                format!("{:?} vs {:?}", self.shape(v), self.shape(sigma)),
            ));
        }
        if let Some(s) = self.value(sigma).data().iter().find(|s| !(s.f64() > 0.0)) {
            return Err(Error::InvalidArgument(format!("scale {s} must be positive")));
        }
        let p = self
            .value(v)
            .zip_map(self.value(sigma), |v, s| T::c(gaussian_bin_prob_raw(v.f64(), 0.0, s.f64())));
        Ok(self.push(p, &[v, sigma], || {
            Box::new(|g, inp, _| {
                let n = g.numel();
                let (mut gv, mut gs) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for ((&g, &v), &s) in g.data().iter().zip(inp[0].data()).zip(inp[1].data()) {
                    let (v, s, g) = (v.f64(), s.f64(), g.f64());
                    let a = v.abs();
                    let (hi, lo) = ((0.5 - a) / s, (-0.5 - a) / s);
                    let (ph, pl) = (normal_pdf(hi), normal_pdf(lo));
                    // d/da of the mass is (pl - ph) / s
                    let dv = v.signum() * (pl - ph) / s;
                    let ds = (pl * lo - ph * hi) / s;
                    gv.push(T::c(if v == 0.0 { 0.0 } else { g * dv }));
                    gs.push(T::c(g * ds));
                }
                vec![
                    Some(Tensor::from_parts(inp[0].shape().to_vec(), gv)),
                    Some(Tensor::from_parts(inp[1].shape().to_vec(), gs)),
                ]
            })
        }))
    }
}

/// Floored likelihood of `y_hat` under `N(mu, sigma^2) * U(-1/2, 1/2)`.
pub fn gaussian_likelihood<T: Scalar>(t: &mut Tape<T>, y_hat: Var, mu: Var, sigma: Var) -> Result<Var> {
    let v = t.sub(y_hat, mu)?;
    let p = t.gaussian_bin_mass(v, sigma)?;
    Ok(t.lower_bound(p, P_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    #[test]
    fn tails_are_symmetric() {
        for k in -6..=6 {
            let a = gaussian_bin_prob_raw(k as f64, 0.25, 1.3);
            let b = gaussian_bin_prob_raw(0.5 - k as f64, 0.25, 1.3);
            assert!((a - b).abs() < 1e-15, "{k}");
        }
    }

    #[test]
    fn floor_applies() {
        assert_eq!(gaussian_bin_prob(100.0, 0.0, 1.0), P_FLOOR);
    }

    #[test]
    fn fused_gradients() {
        // probe away from v = 0 where |v| has a kink
        let pts = [0.3, -1.7, 2.2, 0.9, 0.2, 1.1, 0.4, 3.0];
        let err = grad_check(
            |t, x| {
                let v = t.narrow(x, 0, 0, 4)?;
                let s = t.narrow(x, 0, 4, 4)?;
                let p = t.gaussian_bin_mass(v, s)?;
                let l = t.ln(p);
                Ok(t.sum(l))
            },
            &Tensor::from_f64(&[8], &pts).unwrap(),
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_scale() {
        let mut t = Tape::<f64>::new();
        let v = t.constant(Tensor::zeros(&[2]));
        let s = t.constant(Tensor::from_f64(&[2], &[1.0, 0.0]).unwrap());
        assert!(t.gaussian_bin_mass(v, s).is_err());
    }
}
