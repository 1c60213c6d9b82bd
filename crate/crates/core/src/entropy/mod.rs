//! Probability models for the latents: quantisation, the Gaussian
//! conditional, the factorized hyper-latent density, rate, the channel-slice
//! networks and the hyper transforms.

mod factorized;
mod gaussian;
mod hyper;
mod quantize;
mod rate;
mod slices;

pub use factorized::FactorizedDensity;
pub use gaussian::{gaussian_bin_prob, gaussian_bin_prob_raw, gaussian_likelihood, P_FLOOR, SIGMA_FLOOR};
pub use hyper::{HyperAnalysis, HyperConfig, HyperSynthesis};
pub use quantize::{clamp_symbol, quantize, QuantMode, SYMBOL_MAX, SYMBOL_MIN};
pub use rate::{bits_from_probs, rate_bits};
pub use slices::{SliceConfig, SliceNetwork, SliceOutput};
