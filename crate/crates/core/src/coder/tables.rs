use std::sync::OnceLock;

use super::cdf::{quantize_cdf, CdfTable};
use crate::entropy::{SYMBOL_MAX, SYMBOL_MIN};
use crate::error::Result;
use crate::ops::normal_cdf;

pub const PHI_LUT_LEN: usize = 1024;
/// The lookup table covers `[-PHI_LUT_RANGE, PHI_LUT_RANGE]`; it is clamped
/// to 0 and 1 outside.
pub const PHI_LUT_RANGE: f64 = 8.0;

fn lut() -> &'static [f64; PHI_LUT_LEN] {
    static LUT: OnceLock<[f64; PHI_LUT_LEN]> = OnceLock::new();
    LUT.get_or_init(|| {
        let step = 2.0 * PHI_LUT_RANGE / (PHI_LUT_LEN - 1) as f64;
        std::array::from_fn(|i| normal_cdf(-PHI_LUT_RANGE + i as f64 * step))
    })
}

/// Standard normal CDF by linear interpolation in a fixed 1024-entry table.
/// Encoder and decoder build their Gaussian tables from this so they agree
/// bit for bit.
pub fn phi_lut(x: f64) -> f64 {
    let t = lut();
    if !(x > -PHI_LUT_RANGE) {
        return 0.0;
    }
    if x >= PHI_LUT_RANGE {
        return 1.0;
    }
    let pos = (x + PHI_LUT_RANGE) / (2.0 * PHI_LUT_RANGE) * (PHI_LUT_LEN - 1) as f64;
    let i = (pos as usize).min(PHI_LUT_LEN - 2);
    let f = pos - i as f64;
    t[i] + (t[i + 1] - t[i]) * f
}

/// Table for the centred symbol `round(y - mu)` over the coder alphabet
/// `SYMBOL_MIN..=SYMBOL_MAX`, given the scale.
pub fn gaussian_table(sigma: f64) -> Result<CdfTable> {
    let pmf: Vec<f64> = (SYMBOL_MIN..=SYMBOL_MAX)
        .map(|k| {
            let a = (k as f64).abs();
            phi_lut((0.5 - a) / sigma) - phi_lut((-0.5 - a) / sigma)
        })
        .collect();
    quantize_cdf(&pmf)
}

/// Total self-information of `symbols` under their tables.
pub fn table_bits<'t>(symbols: &[usize], tables: impl IntoIterator<Item = &'t CdfTable>) -> f64 {
    symbols.iter().zip(tables).map(|(&s, t)| t.bits(s)).sum()
}
