//! Bjøntegaard delta rate with a least-squares cubic of log10(rate) in PSNR,
//! integrated in closed form over the common PSNR interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
    /// Mean squared error on the 8-bit scale.
    pub mse: f64,
}

impl RdPoint {
    /// Point with the MSE implied by `psnr`.
    pub fn new(bpp: f64, psnr: f64) -> Self {
        Self {
            bpp,
            psnr,
            mse: 255.0 * 255.0 / 10f64.powf(psnr / 10.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    points: Vec<RdPoint>,
}

impl RdCurve {
    /// At least four points with positive, distinct rates; sorted by rate.
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Curve(format!("need at least 4 points, got {}", points.len())));
        }
        if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr.is_finite())) {
            return Err(Error::Curve(format!("invalid point bpp={} psnr={}", p.bpp, p.psnr)));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(Error::Curve("rates must be distinct".into()));
        }
        Ok(Self {
            label: label.into(),
            points,
        })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    /// Non-fatal problems, such as PSNR not increasing with rate.
    pub fn warnings(&self) -> Vec<String> {
        self.points
            .windows(2)
            .filter(|w| w[1].psnr <= w[0].psnr)
            .map(|w| {
                format!(
                    "{}: psnr {} at {} bpp does not exceed {} at {} bpp",
                    self.label, w[1].psnr, w[1].bpp, w[0].psnr, w[0].bpp
                )
            })
            .collect()
    }

    fn psnr_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.psnr), hi.max(p.psnr)))
    }
}

/// Cubic in a standardised variable `t = (x - shift) / scale`.
struct Cubic {
    coef: [f64; 4],
    shift: f64,
    scale: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len() as f64;
        let shift = xs.iter().sum::<f64>() / n;
        let scale = (xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / n).sqrt();
        if !(scale > 0.0) {
            return Err(Error::Curve("all PSNR values are equal".into()));
        }
        // normal equations in the standardised variable
        let mut a = [[0.0f64; 5]; 4];
        for (&x, &y) in xs.iter().zip(ys) {
            let t = (x - shift) / scale;
            let pw = [1.0, t, t * t, t * t * t];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] += pw[i] * pw[j];
                }
                a[i][4] += pw[i] * y;
            }
        }
        for col in 0..4 {
            let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            if a[piv][col].abs() < 1e-12 {
                return Err(Error::Curve("degenerate PSNR values for a cubic fit".into()));
            }
            a.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..5 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        Ok(Self {
            coef: std::array::from_fn(|i| a[i][4] / a[i][i]),
            shift,
            scale,
        })
    }

    /// `integral of p(x) dx` over `[lo, hi]`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.shift) / self.scale;
            self.coef
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
                * self.scale
        };
        anti(hi) - anti(lo)
    }
}

/// Average rate difference of `test` relative to `anchor` at equal quality,
/// in percent. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (alo, ahi) = anchor.psnr_range();
    let (tlo, thi) = test.psnr_range();
    let (lo, hi) = (alo.max(tlo), ahi.min(thi));
    if !(hi > lo) {
        return Err(Error::Curve(format!(
            "no common PSNR range: [{alo}, {ahi}] vs [{tlo}, {thi}]"
        )));
    }
    let fit = |c: &RdCurve| {
        let xs: Vec<f64> = c.points.iter().map(|p| p.psnr).collect();
        let ys: Vec<f64> = c.points.iter().map(|p| p.bpp.log10()).collect();
        Cubic::fit(&xs, &ys)
    };
    let (fa, ft) = (fit(anchor)?, fit(test)?);
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(rates: &[f64], psnrs: &[f64]) -> RdCurve {
        RdCurve::new("c", rates.iter().zip(psnrs).map(|(&r, &p)| RdPoint::new(r, p)).collect()).unwrap()
    }

    #[test]
    fn cubic_reproduces_cubic() {
        let xs = [28.0, 31.0, 33.5, 36.0, 39.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 0.1 * x + 0.002 * x * x + 1e-5 * x * x * x).collect();
        let c = Cubic::fit(&xs, &ys).unwrap();
        // exact antiderivative of the generating polynomial
        let f = |x: f64| 0.5 * x - 0.05 * x * x + 0.002 / 3.0 * x.powi(3) + 2.5e-6 * x.powi(4);
        assert!((c.integral(29.0, 38.0) - (f(38.0) - f(29.0))).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(RdCurve::new("x", vec![RdPoint::new(1.0, 30.0); 3]).is_err());
        let a = curve(&[0.1, 0.2, 0.3, 0.4], &[20.0, 21.0, 22.0, 23.0]);
        let b = curve(&[0.1, 0.2, 0.3, 0.4], &[30.0, 31.0, 32.0, 33.0]);
        assert!(matches!(bd_rate(&a, &b), Err(Error::Curve(_))));
    }

    #[test]
    fn warns_on_non_monotone() {
        let c = curve(&[0.1, 0.2, 0.3, 0.4], &[30.0, 29.0, 32.0, 33.0]);
        assert_eq!(c.warnings().len(), 1);
    }
}
