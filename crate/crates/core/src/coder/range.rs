//! Byte-oriented range coder with a 64-bit low register and carry
//! propagation through a cached byte, in the style of the LZMA coder.
//!
//! The encoder's first output byte is always zero and is not stored, so a
//! stream is `4 + renormalizations` bytes long and the decoder consumes it
//! exactly.

use super::model::{SymbolModel, FREQ_BITS};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    skipped_first: bool,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new(), skipped_first: false }
    }

    fn emit(&mut self, b: u8) {
        if self.skipped_first {
            self.out.push(b);
        } else {
            debug_assert_eq!(b, 0);
            self.skipped_first = true;
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes the interval `[cum, cum + freq)` of a `2^16` total.
    pub fn encode_interval(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= 1 << FREQ_BITS);
        let r = self.range >> FREQ_BITS;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Codes `v`, escaping values outside the model's symbol range.
    pub fn encode(&mut self, v: i32, model: &SymbolModel) {
        match model.index_of(v) {
            Some(i) => self.encode_interval(model.cum[i], model.freq[i]),
            None => {
                let e = model.escape_index();
                self.encode_interval(model.cum[e], model.freq[e]);
                let raw = v as u32;
                self.encode_interval(raw >> 16, 1);
                self.encode_interval(raw & 0xFFFF, 1);
            }
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 4 {
            return Err(Error::CorruptStream(format!("range stream of {} bytes is truncated", data.len())));
        }
        Ok(RangeDecoder {
            data,
            pos: 4,
            range: u32::MAX,
            code: u32::from_be_bytes([data[0], data[1], data[2], data[3]]),
        })
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or_else(|| Error::CorruptStream("range stream exhausted".into()))?;
        self.pos += 1;
        Ok(b)
    }

    /// Returns the scaled target frequency for the next symbol.
    fn target(&mut self) -> Result<(u32, u32)> {
        let r = self.range >> FREQ_BITS;
        let v = self.code / r;
        if v >= 1 << FREQ_BITS {
            return Err(Error::CorruptStream("range code outside the coding interval".into()));
        }
        Ok((r, v))
    }

    fn consume(&mut self, r: u32, cum: u32, freq: u32) -> Result<()> {
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    fn decode_raw16(&mut self) -> Result<u32> {
        let (r, v) = self.target()?;
        self.consume(r, v, 1)?;
        Ok(v)
    }

    pub fn decode(&mut self, model: &SymbolModel) -> Result<i32> {
        let (r, v) = self.target()?;
        let i = model.lookup(v);
        self.consume(r, model.cum[i], model.freq[i])?;
        if i == model.escape_index() {
            let hi = self.decode_raw16()?;
            let lo = self.decode_raw16()?;
            let raw = ((hi << 16) | lo) as i32;
            if model.index_of(raw).is_some() {
                return Err(Error::CorruptStream(format!("escaped value {raw} lies inside the symbol range")));
            }
            return Ok(raw);
        }
        Ok(model.symbol_of(i))
    }

    /// Fails unless every byte of the stream has been consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::CorruptStream(format!(
                "{} trailing bytes after the last symbol",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Codes `symbols[i]` under `model(i)`.
pub fn encode_symbols<'m>(symbols: &[i32], model: impl Fn(usize) -> &'m SymbolModel) -> Vec<u8> {
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        enc.encode(s, model(i));
    }
    enc.finish()
}

pub fn decode_symbols<'m>(bytes: &[u8], count: usize, model: impl Fn(usize) -> &'m SymbolModel) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let out = (0..count).map(|i| dec.decode(model(i))).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
