use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coding::PAD_MULTIPLE;
use super::config::{ModelConfig, TrainConfig};
use super::model::Model;
use crate::entropy::{quantize, rate_bits, QuantMode};
use crate::error::{Error, Result};
use crate::ops::PadMode;
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// The terms of the rate-distortion objective, all scalars on the tape.
#[derive(Clone, Copy, Debug)]
pub struct RdTerms {
    /// `R_y + R_z + lambda * D`.
    pub loss: Var,
    /// Latent rate in bits per pixel.
    pub r_y: Var,
    /// Hyper-latent rate in bits per pixel.
    pub r_z: Var,
    /// Mean squared error on the 8-bit scale.
    pub d: Var,
}

/// Training objective on one image `x: [3, H, W]` in `[0, 1]`. Rates use
/// additive noise, reconstructions straight-through rounding. Medians enter
/// as constants.
pub fn rd_loss<T: Scalar, R: Rng + ?Sized>(
    t: &mut Tape<T>,
    model: &Model,
    store_medians: &[f64],
    x: Var,
    lambda: f64,
    rng: &mut R,
) -> Result<RdTerms> {
    let (h, w) = match *t.shape(x) {
        [3, h, w] => (h, w),
        ref s => return Err(Error::shape("rd_loss", format!("image {s:?}, want [3, H, W]"))),
    };
    let pixels = (h * w) as f64;
    let xp = t.pad2d(
        x,
        h.div_ceil(PAD_MULTIPLE) * PAD_MULTIPLE,
        w.div_ceil(PAD_MULTIPLE) * PAD_MULTIPLE,
        PadMode::Reflect,
    )?;
    let y = model.g_a.forward(t, xp)?;
    let z = model.h_a.forward(t, y)?;

    let z_shape = t.shape(z).to_vec();
    let plane = z_shape[1] * z_shape[2];
    let m = t.constant(Tensor::from_fn(&z_shape, |i| T::c(store_medians[i / plane])));
    let z_noisy = quantize(t, z, QuantMode::Noise, rng);
    let p_z = model.density.likelihood(t, z_noisy)?;
    let centered = t.sub(z, m)?;
    let zq = quantize(t, centered, QuantMode::Ste, rng);
    let z_hat = t.add(zq, m)?;

    let f_mean = model.h_mean.forward(t, z_hat)?;
    let f_scale = model.h_scale.forward(t, z_hat)?;
    let cs = model.cfg.latent / model.cfg.slices;
    let mut decoded = Vec::with_capacity(model.cfg.slices);
    let mut bits_y = None;
    for i in 0..model.cfg.slices {
        let y_i = t.narrow(y, 0, i * cs, cs)?;
        let out = model.slices.forward(t, i, f_mean, f_scale, &decoded, y_i, QuantMode::Noise, rng)?;
        let b = rate_bits(t, out.likelihood)?;
        bits_y = Some(match bits_y {
            None => b,
            Some(acc) => t.add(acc, b)?,
        });
        decoded.push(out.y_bar);
    }
    let y_bar = t.concat(&decoded, 0)?;
    let x_hat = model.g_s.forward(t, y_bar)?;
    let x_hat = t.crop2d(x_hat, h, w)?;

    let r_y = t.scale(bits_y.expect("at least one slice"), 1.0 / pixels);
    let bits_z = rate_bits(t, p_z)?;
    let r_z = t.scale(bits_z, 1.0 / pixels);
    let diff = t.sub(x_hat, x)?;
    let sq = t.square(diff);
    let mse = t.mean(sq);
    let d = t.scale(mse, 255.0 * 255.0);
    let rate = t.add(r_y, r_z)?;
    let weighted = t.scale(d, lambda);
    let loss = t.add(rate, weighted)?;
    Ok(RdTerms { loss, r_y, r_z, d })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub r_y: f64,
    pub r_z: f64,
    pub d: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub store: ParamStore,
    pub trace: Vec<TraceRecord>,
}

impl TrainOutcome {
    /// Mean loss over the first and the last `window` steps.
    pub fn smoothed_ends(&self, window: usize) -> (f64, f64) {
        let n = self.trace.len();
        let w = window.clamp(1, n.max(1));
        let mean = |r: &[TraceRecord]| r.iter().map(|t| t.loss).sum::<f64>() / r.len().max(1) as f64;
        (mean(&self.trace[..w.min(n)]), mean(&self.trace[n.saturating_sub(w)..]))
    }
}

fn crop(img: &Tensor, size: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if h < size || w < size {
        return Err(Error::InvalidArgument(format!("training image {h}x{w} smaller than crop {size}")));
    }
    if (h, w) == (size, size) {
        return Ok(img.clone());
    }
    let (oy, ox) = (rng.random_range(0..=h - size), rng.random_range(0..=w - size));
    Ok(Tensor::from_fn(&[3, size, size], |i| {
        let (c, r, col) = (i / (size * size), (i / size) % size, i % size);
        img.data()[(c * h + oy + r) * w + ox + col]
    }))
}

/// Minimise the rate-distortion objective on `images` with Adam. Each step
/// averages gradients over `batch_size` images drawn with replacement. The
/// quantisation noise for an image depends only on the seed and the image
/// index, so a zero learning rate on a single image gives a constant trace.
pub fn train_toy(model_cfg: ModelConfig, cfg: &TrainConfig, images: &[Tensor]) -> Result<TrainOutcome> {
    let (model, store) = Model::new(model_cfg, cfg.seed)?;
    fine_tune(model, store, cfg, images)
}

/// Continue training existing parameters with a fresh optimiser state; the
/// data order and noise follow `cfg.seed` exactly as in [`train_toy`].
pub fn fine_tune(model: Model, mut store: ParamStore, cfg: &TrainConfig, images: &[Tensor]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut opt = Adam::new(&store, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        opt.lr = cfg.lr_at(step);
        store.zero_grad();
        let medians = model.density.medians(&store);
        let mut sums = [0.0f64; 4];
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..images.len());
            let x = crop(&images[idx], cfg.crop, &mut rng)?;
            let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(idx as u64));
            let grads = {
                let mut t = Tape::with_params(&store);
                let xv = t.constant(x);
                let terms = rd_loss(&mut t, &model, &medians, xv, cfg.lambda, &mut noise)?;
                let vals = [terms.loss, terms.r_y, terms.r_z, terms.d].map(|v| t.value(v).item() as f64);
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        step,
                        detail: format!("L={} R_y={} R_z={} D={}", vals[0], vals[1], vals[2], vals[3]),
                    });
                }
                for (s, v) in sums.iter_mut().zip(vals) {
                    *s += v;
                }
                let scaled = t.scale(terms.loss, 1.0 / cfg.batch_size as f64);
                t.backward(scaled)?
            };
            store.accumulate(&grads);
        }
        let norm = opt.step(&mut store);
        if !norm.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("gradient norm {norm}"),
            });
        }
        let b = cfg.batch_size as f64;
        trace.push(TraceRecord {
            step,
            loss: sums[0] / b,
            r_y: sums[1] / b,
            r_z: sums[2] / b,
            d: sums[3] / b,
        });
    }
    Ok(TrainOutcome { model, store, trace })
}
