use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Interleaved 8-bit RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// `[3, H, W]` planes scaled to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        Tensor::from_fn(&[3, self.height, self.width], |i| {
            self.data[(i % plane) * 3 + i / plane] as f32 / 255.0
        })
    }

    /// Inverse of [`ImageBuffer::to_tensor`], rounding and clamping.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w) = match *t.shape() {
            [3, h, w] => (h, w),
            ref s => return Err(Error::shape("from_tensor", format!("{s:?}, want [3, H, W]"))),
        };
        let plane = h * w;
        let data = (0..3 * plane)
            .map(|i| {
                let v = t.data()[(i % 3) * plane + i / 3];
                (v * 255.0).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Self::new(w, h, data)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parse binary PPM (P6, maxval 255). Comments are allowed in the header.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 || &bytes[..2] != b"P6" {
            let tag = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
            return Err(Error::UnsupportedFormat(format!("expected binary PPM (P6), found {tag:?}")));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for (k, field) in fields.iter_mut().enumerate() {
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            if k == 0 && pos == 2 {
                return Err(Error::MalformedHeader("missing whitespace after magic".into()));
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            let digits = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
            *field = digits
                .parse()
                .map_err(|_| Error::MalformedHeader(format!("field {k} is not a number")))?;
        }
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 {
            return Err(Error::MalformedHeader(format!("empty image {width}x{height}")));
        }
        if maxval != 255 {
            return Err(Error::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::MalformedHeader("missing whitespace before pixel data".into()));
        }
        pos += 1;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
        let payload = &bytes[pos..];
        if payload.len() < expected {
            return Err(Error::PayloadTruncated {
                expected,
                got: payload.len(),
            });
        }
        Self::new(width, height, payload[..expected].to_vec())
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    ImageBuffer::from_ppm(&std::fs::read(path)?)
}

pub fn save_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    Ok(std::fs::write(path, img.to_ppm())?)
}
