use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Below this `|a * delta|` the input gain uses its second-order series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// Switch point for the series form of `d gain / d a`, which otherwise loses
/// precision to cancellation.
const GRAD_SERIES_THRESHOLD: f64 = 0.1;

/// Zero-order-hold discretisation of `h' = a h + b x` over a step `delta`.
/// Returns `(a_bar, b_bar)`.
pub fn zoh_discretize(a: f64, b: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let (a_bar, gain) = zoh_gain(a, delta);
    Ok((a_bar, gain * b))
}

/// `(exp(a*delta), (exp(a*delta) - 1) / a)`: the state decay and the input
/// gain per unit `b`.
#[inline]
pub(crate) fn zoh_gain<T: Scalar>(a: T, delta: T) -> (T, T) {
    let x = a * delta;
    let a_bar = x.exp();
    let gain = if x.abs() < T::c(SERIES_THRESHOLD) {
        delta * (T::one() + x * T::c(0.5))
    } else {
        x.exp_m1() / a
    };
    (a_bar, gain)
}

/// Partial derivatives of [`zoh_gain`]'s outputs.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ZohGrad<T> {
    pub a_bar: T,
    pub gain: T,
    pub a_bar_d_delta: T,
    pub gain_d_delta: T,
    pub a_bar_d_a: T,
    pub gain_d_a: T,
}

#[inline]
pub(crate) fn zoh_grad<T: Scalar>(a: T, delta: T) -> ZohGrad<T> {
    let (a_bar, gain) = zoh_gain(a, delta);
    let x = a * delta;
    let gain_d_delta = if x.abs() < T::c(SERIES_THRESHOLD) {
        T::one() + x
    } else {
        a_bar
    };
    let gain_d_a = if x.abs() < T::c(GRAD_SERIES_THRESHOLD) {
        // delta^2 * sum_k k x^(k-1) / (k+1)!
        let poly = T::c(0.5)
            + x * (T::c(1.0 / 3.0) + x * (T::c(0.125) + x * (T::c(1.0 / 30.0) + x * T::c(1.0 / 144.0))));
        delta * delta * poly
    } else {
        (delta * a_bar - gain) / a
    };
    ZohGrad {
        a_bar,
        gain,
        a_bar_d_delta: a * a_bar,
        gain_d_delta,
        a_bar_d_a: delta * a_bar,
        gain_d_a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_half_life() {
        let (ab, bb) = zoh_discretize(-1.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert!((ab - 0.5).abs() < 1e-12 && (bb - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vanishing_decay_limit() {
        let (ab, bb) = zoh_discretize(-1e-12, 3.0, 0.25).unwrap();
        assert!((ab - 1.0).abs() < 1e-12);
        assert!((bb - 0.75).abs() < 1e-12);
        let (_, bb) = zoh_discretize(0.0, 3.0, 0.25).unwrap();
        assert_eq!(bb, 0.75);
    }

    #[test]
    fn long_step_limit() {
        let (ab, bb) = zoh_discretize(-1.0, 1.0, 60.0).unwrap();
        assert!(ab < 1e-25 && (bb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_delta() {
        assert!(zoh_discretize(-1.0, 1.0, 0.0).is_err());
        assert!(zoh_discretize(-1.0, 1.0, -0.1).is_err());
        assert!(zoh_discretize(-1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn branches_agree_at_threshold() {
        let delta = 0.5f64;
        for x in [0.99e-6, 1.01e-6, 0.099, 0.101] {
            let a = -x / delta;
            let g = zoh_grad(a, delta);
            let exact_gain = (a * delta).exp_m1() / a;
            assert!((g.gain - exact_gain).abs() < 1e-12);
            // d/da of delta * sum_k x^k / (k+1)!, summed to convergence
            let mut oracle = 0.0;
            let mut fact = 1.0;
            for k in 1..20 {
                fact *= (k + 1) as f64;
                oracle += k as f64 * (-x).powi(k - 1) / fact;
            }
            oracle *= delta * delta;
            assert!((g.gain_d_a - oracle).abs() < 1e-7 * oracle, "x={x}: {} vs {oracle}", g.gain_d_a);
        }
    }
}
