use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

/// Total information `-sum(log2 p)` of `probs`, differentiable.
pub fn rate_bits<T: Scalar>(t: &mut Tape<T>, probs: Var) -> Result<Var> {
    if let Some(&p) = t.value(probs).data().iter().find(|&&p| !(p > T::zero() && p <= T::one())) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1]")));
    }
    let l = t.ln(probs);
    let s = t.sum(l);
    Ok(t.scale(s, -std::f64::consts::LOG2_E))
}

/// Plain-slice version of [`rate_bits`].
pub fn bits_from_probs(probs: &[f64]) -> Result<f64> {
    probs.iter().try_fold(0.0, |acc, &p| {
        if p > 0.0 && p <= 1.0 {
            Ok(acc - p.log2())
        } else {
            Err(Error::InvalidArgument(format!("probability {p} outside (0, 1]")))
        }
    })
}
