use rand::Rng;

use super::gaussian::{gaussian_likelihood, SIGMA_FLOOR};
use super::quantize::{quantize, QuantMode};
use crate::blocks::{Fstam, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};
use crate::params::ParamBuilder;
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceConfig {
    /// Latent channels `M`.
    pub latent: usize,
    /// Number of channel slices `n`; must divide `latent`.
    pub slices: usize,
    /// Channels of each hyper-synthesis output.
    pub hyper: usize,
    /// Hidden width of the slice networks.
    pub hidden: usize,
    pub heads: usize,
    pub window: usize,
}

impl SliceConfig {
    pub fn slice_channels(&self) -> usize {
        self.latent / self.slices
    }
}

/// conv, leaky ReLU, FSTAM, conv.
#[derive(Clone, Debug)]
struct ParamBranch {
    conv_in: Conv2d,
    fstam: Fstam,
    conv_out: Conv2d,
}

impl ParamBranch {
    fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, cfg: &SliceConfig) -> Result<Self> {
        pb.scoped(name, |pb| {
            Ok(Self {
                conv_in: Conv2d::new(pb, "conv_in", c_in, cfg.hidden, 3, 1, Init::FanIn),
                fstam: Fstam::new(pb, "fstam", cfg.hidden, cfg.heads, cfg.window)?,
                conv_out: Conv2d::new(pb, "conv_out", cfg.hidden, cfg.slice_channels(), 3, 1, Init::FanIn),
            })
        })
    }

    fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let u = self.conv_in.forward(t, x)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.fstam.forward(t, u)?;
        self.conv_out.forward(t, u)
    }
}

/// Residual predictor `r = tanh(conv(lrelu(conv([mu, y_hat])))) / 2`.
#[derive(Clone, Debug)]
struct Residual {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl Residual {
    fn new(pb: &mut ParamBuilder, name: &str, cfg: &SliceConfig) -> Self {
        let c = cfg.slice_channels();
        pb.scoped(name, |pb| Self {
            conv1: Conv2d::new(pb, "conv1", 2 * c, cfg.hidden, 3, 1, Init::FanIn),
            conv2: Conv2d::new(pb, "conv2", cfg.hidden, c, 3, 1, Init::Zero),
        })
    }

    fn forward<T: Scalar>(&self, t: &mut Tape<T>, mu: Var, y_hat: Var) -> Result<Var> {
        let x = t.concat(&[mu, y_hat], 0)?;
        let u = self.conv1.forward(t, x)?;
        let u = t.leaky_relu(u, LEAKY_SLOPE);
        let u = self.conv2.forward(t, u)?;
        let u = t.tanh(u);
        Ok(t.scale(u, 0.5))
    }
}

#[derive(Clone, Debug)]
struct Slice {
    mean: ParamBranch,
    scale: ParamBranch,
    residual: Residual,
}

/// Result of one slice step.
#[derive(Clone, Copy, Debug)]
pub struct SliceOutput {
    pub mu: Var,
    pub sigma: Var,
    /// Rounded `y - mu` (integer valued); the coded symbols.
    pub q: Var,
    /// Quantised latent `Q(y - mu) + mu`, hard or straight-through.
    pub y_hat: Var,
    /// `y_hat` plus the predicted residual; what later slices condition on.
    pub y_bar: Var,
    /// Floored bin likelihoods of the rate-path quantisation.
    pub likelihood: Var,
}

/// Channel-wise autoregressive parameter networks, one per slice.
#[derive(Clone, Debug)]
pub struct SliceNetwork {
    cfg: SliceConfig,
    slices: Vec<Slice>,
}

impl SliceNetwork {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: SliceConfig) -> Result<Self> {
        if cfg.slices == 0 || cfg.latent % cfg.slices != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} latent channels do not split into {} slices",
                cfg.latent, cfg.slices
            )));
        }
        let cs = cfg.slice_channels();
        pb.scoped(name, |pb| {
            let slices = (0..cfg.slices)
                .map(|i| {
                    pb.scoped(&format!("slice{i}"), |pb| {
                        Ok(Slice {
                            mean: ParamBranch::new(pb, "mean", cfg.hyper + i * cs, &cfg)?,
                            scale: ParamBranch::new(pb, "scale", cfg.hyper + i * cs, &cfg)?,
                            residual: Residual::new(pb, "residual", &cfg),
                        })
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Self { cfg, slices })
        })
    }

    pub fn config(&self) -> &SliceConfig {
        &self.cfg
    }

    /// `mu_i` and `sigma_i` from the hyper features and the already decoded
    /// slices `decoded = [y_bar_0, .., y_bar_{i-1}]`.
    pub fn stats<T: Scalar>(
        &self,
        t: &mut Tape<T>,
        i: usize,
        f_mean: Var,
        f_scale: Var,
        decoded: &[Var],
    ) -> Result<(Var, Var)> {
        let slice = self.slices.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("slice index {i} out of range 0..{}", self.cfg.slices))
        })?;
        if decoded.len() != i {
            return Err(Error::InvalidArgument(format!(
                "slice {i} needs {i} decoded slices, got {}",
                decoded.len()
            )));
        }
        let (h, w) = {
            let s = t.shape(f_mean);
            (s[1], s[2])
        };
        let cs = self.cfg.slice_channels();
        for &d in decoded {
            if t.shape(d) != [cs, h, w] {
                return Err(Error::shape(
                    "slice_network",
                    format!("decoded slice {:?} vs [{cs}, {h}, {w}]", t.shape(d)),
                ));
            }
        }
        let cond = |t: &mut Tape<T>, f: Var| -> Result<Var> {
            let parts: Vec<Var> = std::iter::once(f).chain(decoded.iter().copied()).collect();
            t.concat(&parts, 0)
        };
        let m_in = cond(t, f_mean)?;
        let mu = slice.mean.forward(t, m_in)?;
        let s_in = cond(t, f_scale)?;
        let s = slice.scale.forward(t, s_in)?;
        let s = t.softplus(s);
        let sigma = t.lower_bound(s, SIGMA_FLOOR);
        Ok((mu, sigma))
    }

    /// `y_hat + Res_i(mu, y_hat)`.
    pub fn refine<T: Scalar>(&self, t: &mut Tape<T>, i: usize, mu: Var, y_hat: Var) -> Result<Var> {
        let slice = self
            .slices
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("slice index {i} out of range")))?;
        let r = slice.residual.forward(t, mu, y_hat)?;
        t.add(y_hat, r)
    }

    /// One full slice step. `Hard` rounds for both the likelihood and `y_hat`.
    /// `Noise` and `Ste` both train with noise on the rate path and
    /// straight-through rounding on the reconstruction path.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        t: &mut Tape<T>,
        i: usize,
        f_mean: Var,
        f_scale: Var,
        decoded: &[Var],
        y_i: Var,
        mode: QuantMode,
        rng: &mut R,
    ) -> Result<SliceOutput> {
        let (mu, sigma) = self.stats(t, i, f_mean, f_scale, decoded)?;
        if t.shape(y_i) != t.shape(mu) {
            return Err(Error::shape(
                "slice_network",
                format!("y_{i} {:?} vs mu {:?}", t.shape(y_i), t.shape(mu)),
            ));
        }
        let centered = t.sub(y_i, mu)?;
        let (q, rate_q) = match mode {
            QuantMode::Hard => {
                let q = quantize(t, centered, QuantMode::Hard, rng);
                (q, q)
            }
            QuantMode::Noise | QuantMode::Ste => {
                let q = quantize(t, centered, QuantMode::Ste, rng);
                let n = quantize(t, centered, QuantMode::Noise, rng);
                (q, n)
            }
        };
        let y_hat = t.add(q, mu)?;
        let y_rate = t.add(rate_q, mu)?;
        let likelihood = gaussian_likelihood(t, y_rate, mu, sigma)?;
        let y_bar = self.refine(t, i, mu, y_hat)?;
        Ok(SliceOutput {
            mu,
            sigma,
            q,
            y_hat,
            y_bar,
            likelihood,
        })
    }
}
