use rand::Rng;

use crate::ops::round_half_away;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Smallest codable symbol.
pub const SYMBOL_MIN: i32 = -127;
/// Largest codable symbol.
pub const SYMBOL_MAX: i32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive uniform noise in `[-1/2, 1/2)`: differentiable rate proxy.
    Noise,
    /// Rounding forward, identity backward.
    Ste,
    /// Rounding, no gradient.
    Hard,
}

/// Quantise `v`. Rounding is half away from zero. `rng` is only drawn from in
/// [`QuantMode::Noise`].
pub fn quantize<T: Scalar, R: Rng + ?Sized>(t: &mut Tape<T>, v: Var, mode: QuantMode, rng: &mut R) -> Var {
    match mode {
        QuantMode::Noise => {
            let shape = t.shape(v).to_vec();
            let u = Tensor::from_fn(&shape, |_| T::c(rng.random_range(-0.5..0.5)));
            let u = t.constant(u);
            t.add(v, u).expect("same shape")
        }
        QuantMode::Ste => t.round_ste(v),
        QuantMode::Hard => {
            let r = t.value(v).map(round_half_away);
            t.constant(r)
        }
    }
}

/// Round half away from zero and clamp into the coder alphabet.
pub fn clamp_symbol(x: f64) -> i32 {
    let r = x.round();
    if r.is_nan() {
        return 0;
    }
    r.clamp(SYMBOL_MIN as f64, SYMBOL_MAX as f64) as i32
}
