//! 32-bit range coder with byte-wise carry propagation.

use super::cdf::{CdfTable, PRECISION_BITS};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    /// 32-bit window plus a carry bit.
    low: u64,
    range: u32,
    /// Last byte not yet written, followed by `pending - 1` bytes of 0xFF,
    /// all of which a carry may still change.
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, symbol: usize, table: &CdfTable) -> Result<()> {
        if symbol >= table.alphabet() {
            return Err(Error::SymbolOutOfAlphabet {
                symbol,
                alphabet: table.alphabet(),
            });
        }
        let (start, freq) = table.span(symbol);
        let r = self.range >> PRECISION_BITS;
        self.low += (r * start) as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        // The first byte is the initial empty cache and never carries.
        debug_assert_eq!(self.out[0], 0);
        self.out.remove(0);
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    range: u32,
    /// Offset of the coded value from the bottom of the current interval.
    code: u32,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let mut d = Self {
            range: u32::MAX,
            code: 0,
            bytes,
            pos: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or(Error::TruncatedStream {
            needed: self.pos + 1,
            available: self.bytes.len(),
        })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<usize> {
        let r = self.range >> PRECISION_BITS;
        let target = (self.code / r).min((1 << PRECISION_BITS) - 1);
        let symbol = table.lookup(target);
        let (start, freq) = table.span(symbol);
        // corrupted input can leave code outside the interval; never panic
        self.code = self.code.wrapping_sub(r * start);
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(symbol)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Encode `symbols[i]` with `tables[i]`.
pub fn encode_symbols<'t>(symbols: &[usize], tables: impl IntoIterator<Item = &'t CdfTable>) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    let mut tables = tables.into_iter();
    for &s in symbols {
        let t = tables
            .next()
            .ok_or_else(|| Error::InvalidArgument("fewer tables than symbols".into()))?;
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

/// Decode one symbol per table. Fails if the stream ends early.
pub fn decode_symbols<'t>(bytes: &[u8], tables: impl IntoIterator<Item = &'t CdfTable>) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(bytes)?;
    tables.into_iter().map(|t| dec.decode(t)).collect()
}
