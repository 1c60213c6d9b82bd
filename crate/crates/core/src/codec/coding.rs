use std::collections::HashMap;

use super::model::Model;
use crate::coder::{gaussian_table, quantize_cdf, CdfTable, CodedStream, RangeDecoder, RangeEncoder};
use crate::entropy::{clamp_symbol, gaussian_bin_prob, SYMBOL_MAX, SYMBOL_MIN};
use crate::error::{Error, Result};
use crate::ops::PadMode;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Images are reflect-padded to a multiple of this (16x main, 4x hyper).
pub const PAD_MULTIPLE: usize = 64;

/// Encoder output, with the latents the decoder must reproduce.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub stream: CodedStream,
    pub z_hat: Tensor,
    /// Concatenated refined slices.
    pub y_bar: Tensor,
    /// Model bits of the coded symbols (floored probabilities, hard rounding).
    pub estimated_bits: f64,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    /// `[3, H, W]` in `[0, 1]`, cropped to the original size.
    pub image: Tensor,
    pub z_hat: Tensor,
    pub y_bar: Tensor,
}

fn symbol_index(q: i32) -> usize {
    (q - SYMBOL_MIN) as usize
}

fn padded(n: usize) -> usize {
    n.div_ceil(PAD_MULTIPLE) * PAD_MULTIPLE
}

/// Per-channel tables for the centred hyper-latent symbols.
fn z_tables(model: &Model, store: &ParamStore, medians: &[f64]) -> Result<Vec<CdfTable>> {
    medians
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let pmf: Vec<f64> = (SYMBOL_MIN..=SYMBOL_MAX)
                .map(|q| model.density.bin_prob_raw(store, c, m + q as f64))
                .collect();
            quantize_cdf(&pmf)
        })
        .collect()
}

/// Gaussian tables keyed by the bit pattern of the scale.
#[derive(Default)]
struct TableCache(HashMap<u32, CdfTable>);

impl TableCache {
    fn get(&mut self, sigma: f32) -> Result<&CdfTable> {
        if !self.0.contains_key(&sigma.to_bits()) {
            let t = gaussian_table(sigma as f64)?;
            self.0.insert(sigma.to_bits(), t);
        }
        Ok(&self.0[&sigma.to_bits()])
    }
}

fn z_hat_from_symbols(q: &[i32], medians: &[f64], shape: &[usize]) -> Tensor {
    let plane = shape[1] * shape[2];
    Tensor::from_fn(shape, |i| q[i] as f32 + medians[i / plane] as f32)
}

fn check_image(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        &[3, h, w] if h > 0 && w > 0 => Ok((h, w)),
        s => Err(Error::shape("encode_image", format!("image {s:?}, want [3, H, W]"))),
    }
}

/// Compress `x: [3, H, W]` with values in `[0, 1]`.
pub fn encode_image(model: &Model, store: &ParamStore, x: &Tensor, lambda_index: u8) -> Result<Encoded> {
    let (h, w) = check_image(x)?;
    let (width, height) = (
        u32::try_from(w).map_err(|_| Error::InvalidArgument("image too wide".into()))?,
        u32::try_from(h).map_err(|_| Error::InvalidArgument("image too tall".into()))?,
    );
    let mut t = Tape::inference(store);
    let xv = t.constant(x.clone());
    let xp = t.pad2d(xv, padded(h), padded(w), PadMode::Reflect)?;
    let y = model.g_a.forward(&mut t, xp)?;
    let z = model.h_a.forward(&mut t, y)?;

    let medians = model.density.medians(store);
    let z_shape = t.shape(z).to_vec();
    let plane = z_shape[1] * z_shape[2];
    let zq: Vec<i32> = t
        .value(z)
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| clamp_symbol(v as f64 - medians[i / plane]))
        .collect();
    let tables = z_tables(model, store, &medians)?;
    let mut estimated_bits = 0.0;
    let mut enc = RangeEncoder::new();
    for (i, &q) in zq.iter().enumerate() {
        let c = i / plane;
        enc.encode(symbol_index(q), &tables[c])?;
        estimated_bits -= model.density.bin_prob(store, c, medians[c] + q as f64).log2();
    }
    let z_segment = enc.finish();
    let z_hat = z_hat_from_symbols(&zq, &medians, &z_shape);

    let zv = t.constant(z_hat.clone());
    let f_mean = model.h_mean.forward(&mut t, zv)?;
    let f_scale = model.h_scale.forward(&mut t, zv)?;
    let cs = model.cfg.latent / model.cfg.slices;
    let mut cache = TableCache::default();
    let mut decoded: Vec<Var> = Vec::with_capacity(model.cfg.slices);
    let mut slice_segments = Vec::with_capacity(model.cfg.slices);
    for i in 0..model.cfg.slices {
        let (mu, sigma) = model.slices.stats(&mut t, i, f_mean, f_scale, &decoded)?;
        let y_i = t.narrow(y, 0, i * cs, cs)?;
        let mut enc = RangeEncoder::new();
        let (yd, md, sd) = (t.value(y_i).data(), t.value(mu).data(), t.value(sigma).data());
        let mut y_hat = Vec::with_capacity(yd.len());
        for j in 0..yd.len() {
            let q = clamp_symbol((yd[j] - md[j]) as f64);
            enc.encode(symbol_index(q), cache.get(sd[j])?)?;
            estimated_bits -= gaussian_bin_prob(q as f64, 0.0, sd[j] as f64).log2();
            y_hat.push(q as f32 + md[j]);
        }
        slice_segments.push(enc.finish());
        let y_hat = t.constant(Tensor::new(t.shape(mu), y_hat)?);
        decoded.push(model.slices.refine(&mut t, i, mu, y_hat)?);
    }
    let y_bar = t.concat(&decoded, 0)?;
    Ok(Encoded {
        stream: CodedStream {
            width,
            height,
            lambda_index,
            z_segment,
            slice_segments,
        },
        z_hat,
        y_bar: t.value(y_bar).clone(),
        estimated_bits,
    })
}

/// Inverse of [`encode_image`].
pub fn decode_image(model: &Model, store: &ParamStore, stream: &CodedStream) -> Result<Decoded> {
    let (h, w) = (stream.height as usize, stream.width as usize);
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument("stream records an empty image".into()));
    }
    if stream.slice_segments.len() != model.cfg.slices {
        return Err(Error::InvalidArgument(format!(
            "stream has {} slices, model expects {}",
            stream.slice_segments.len(),
            model.cfg.slices
        )));
    }
    let (ph, pw) = (padded(h), padded(w));
    let z_shape = [model.cfg.hyper_latent, ph / PAD_MULTIPLE, pw / PAD_MULTIPLE];
    let plane = z_shape[1] * z_shape[2];
    let medians = model.density.medians(store);
    let tables = z_tables(model, store, &medians)?;
    let mut dec = RangeDecoder::new(&stream.z_segment)?;
    let zq = (0..z_shape[0] * plane)
        .map(|i| dec.decode(&tables[i / plane]).map(|s| s as i32 + SYMBOL_MIN))
        .collect::<Result<Vec<_>>>()?;
    let z_hat = z_hat_from_symbols(&zq, &medians, &z_shape);

    let mut t = Tape::inference(store);
    let zv = t.constant(z_hat.clone());
    let f_mean = model.h_mean.forward(&mut t, zv)?;
    let f_scale = model.h_scale.forward(&mut t, zv)?;
    let mut cache = TableCache::default();
    let mut decoded: Vec<Var> = Vec::with_capacity(model.cfg.slices);
    for (i, segment) in stream.slice_segments.iter().enumerate() {
        let (mu, sigma) = model.slices.stats(&mut t, i, f_mean, f_scale, &decoded)?;
        let mut dec = RangeDecoder::new(segment)?;
        let (md, sd) = (t.value(mu).data(), t.value(sigma).data());
        let mut y_hat = Vec::with_capacity(md.len());
        for j in 0..md.len() {
            let q = dec.decode(cache.get(sd[j])?)? as i32 + SYMBOL_MIN;
            y_hat.push(q as f32 + md[j]);
        }
        let y_hat = t.constant(Tensor::new(t.shape(mu), y_hat)?);
        decoded.push(model.slices.refine(&mut t, i, mu, y_hat)?);
    }
    let y_bar = t.concat(&decoded, 0)?;
    let x_hat = model.g_s.forward(&mut t, y_bar)?;
    let x_hat = t.crop2d(x_hat, h, w)?;
    Ok(Decoded {
        image: t.value(x_hat).map(|v| v.clamp(0.0, 1.0)),
        z_hat,
        y_bar: t.value(y_bar).clone(),
    })
}
