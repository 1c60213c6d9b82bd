use serde::{Deserialize, Serialize};

use super::image::ImageBuffer;
use crate::codec::{decode_image, encode_image, Model};
use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Reported PSNR of identical images.
pub const PSNR_CAP: f64 = 100.0;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(
            "psnr",
            format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height),
        ));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// `10 log10(255^2 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0 * 255.0 / m).log10()).min(PSNR_CAP))
}

/// One coded image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub bpp: f64,
    pub psnr: f64,
    pub mse: f64,
    pub bytes: usize,
    pub width: usize,
    pub height: usize,
}

/// Encode, serialise and decode `img`; rate counts the whole container.
pub fn evaluate(model: &Model, store: &ParamStore, img: &ImageBuffer, lambda_index: u8) -> Result<(EvalRecord, Vec<u8>, ImageBuffer)> {
    let enc = encode_image(model, store, &img.to_tensor(), lambda_index)?;
    let bytes = enc.stream.to_bytes()?;
    let dec = decode_image(model, store, &crate::coder::CodedStream::from_bytes(&bytes)?)?;
    let rec = ImageBuffer::from_tensor(&dec.image)?;
    let record = EvalRecord {
        bpp: bytes.len() as f64 * 8.0 / (img.width * img.height) as f64,
        psnr: psnr(img, &rec)?,
        mse: mse(img, &rec)?,
        bytes: bytes.len(),
        width: img.width,
        height: img.height,
    };
    Ok((record, bytes, rec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize, v: u8) -> ImageBuffer {
        ImageBuffer::new(w, h, vec![v; 3 * w * h]).unwrap()
    }

    #[test]
    fn identical_is_capped() {
        assert_eq!(psnr(&flat(4, 4, 7), &flat(4, 4, 7)).unwrap(), PSNR_CAP);
    }

    #[test]
    fn off_by_one() {
        let p = psnr(&flat(5, 3, 10), &flat(5, 3, 11)).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((p - 48.1308).abs() < 1e-4);
    }

    #[test]
    fn checkerboard_inverse_is_zero_db() {
        let data: Vec<u8> = (0..48).map(|i| if (i / 3) % 2 == 0 { 0 } else { 255 }).collect();
        let inv: Vec<u8> = data.iter().map(|v| 255 - v).collect();
        let a = ImageBuffer::new(4, 4, data).unwrap();
        let b = ImageBuffer::new(4, 4, inv).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mismatch() {
        assert!(psnr(&flat(4, 4, 0), &flat(4, 5, 0)).is_err());
    }
}
