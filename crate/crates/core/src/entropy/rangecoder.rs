//! 32-bit range coder with carry propagation and byte-wise renormalisation.
//!
//! The encoder keeps a 33-bit `low`; a carry out of bit 32 ripples into the
//! cached byte and any run of pending `0xFF` bytes. Renormalisation shifts
//! out one byte whenever `range < 2^24`. The leading byte of the classic
//! formulation is always zero and is not written; trailing zero bytes are
//! trimmed too, since the decoder reads zeros past the end.

use crate::entropy::model::{cost_units, ContextGroupModel};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

/// Sink for coded symbols: the real encoder, or a cost meter that only
/// adds up code lengths.
pub trait SymbolSink {
    /// Codes the interval `[cum, cum + freq)` of `total`.
    fn symbol(&mut self, cum: u32, freq: u32, total: u32);

    /// Codes `n ≤ 16` bits uniformly.
    fn bits(&mut self, value: u32, n: u32) {
        if n > 0 {
            self.symbol(value, 1, 1 << n);
        }
    }

    /// Codes `symbol` with a static table. Callers that know the cost in
    /// advance may override this.
    fn table_symbol(&mut self, table: &ContextGroupModel, symbol: u32) {
        self.symbol(table.cum(symbol), table.freq(symbol), crate::entropy::model::SCALE);
    }
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    fn emit(&mut self, byte: u8) {
        if self.skip_first {
            debug_assert_eq!(byte, 0);
            self.skip_first = false;
        } else {
            self.out.push(byte);
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

    /// Flushes the coder and returns the coded bytes.
    pub fn finish(mut self) -> Vec<u8> {
        // Pick the value in the final interval with the most trailing zeros.
        let hi = self.low + self.range as u64 - 1;
        for k in (0..=32).rev() {
            let mask = (1u64 << k) - 1;
            let v = (self.low + mask) & !mask;
            if v <= hi {
                self.low = v;
                break;
            }
        }
        for _ in 0..5 {
            self.shift_low();
        }
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

impl SymbolSink for RangeEncoder {
    #[inline]
    fn symbol(&mut self, cum: u32, freq: u32, total: u32) {
        debug_assert!(freq > 0 && cum + freq <= total && total <= 1 << 16);
        let r = self.range / total;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Scaled target in `0..total`; must be followed by [`Self::consume`].
    #[inline]
    pub fn target(&mut self, total: u32) -> Result<u32> {
        self.range /= total;
        let v = self.code / self.range;
        if v >= total {
            return Err(Error::CorruptStream);
        }
        Ok(v)
    }

    #[inline]
    pub fn consume(&mut self, cum: u32, freq: u32) {
        self.code -= cum * self.range;
        self.range *= freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn bits(&mut self, n: u32) -> Result<u32> {
        if n == 0 {
            return Ok(0);
        }
        let v = self.target(1 << n)?;
        self.consume(v, 1);
        Ok(v)
    }

    /// Decodes one symbol from a frequency list.
    pub fn symbol_from(&mut self, freqs: &[u32]) -> Result<usize> {
        let total: u32 = freqs.iter().sum();
        let v = self.target(total)?;
        let mut cum = 0;
        for (i, &f) in freqs.iter().enumerate() {
            if v < cum + f {
                self.consume(cum, f);
                return Ok(i);
            }
            cum += f;
        }
        Err(Error::CorruptStream)
    }

    pub fn table_symbol(&mut self, table: &ContextGroupModel) -> Result<u32> {
        let v = self.target(crate::entropy::model::SCALE)?;
        let sym = table.find(v);
        self.consume(table.cum(sym), table.freq(sym));
        Ok(sym)
    }
}

/// Codes one symbol from a frequency list.
pub fn encode_from<S: SymbolSink + ?Sized>(sink: &mut S, freqs: &[u32], index: usize) {
    let cum: u32 = freqs[..index].iter().sum();
    let total: u32 = freqs.iter().sum();
    sink.symbol(cum, freqs[index], total);
}

/// Adds up code lengths instead of producing bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub units: u64,
}

impl SymbolSink for CostMeter {
    fn symbol(&mut self, _cum: u32, freq: u32, total: u32) {
        self.units += cost_units(freq, total) as u64;
    }

    fn bits(&mut self, _value: u32, n: u32) {
        self.units += (n as u64) << crate::entropy::model::COST_FRAC_BITS;
    }

    fn table_symbol(&mut self, table: &ContextGroupModel, symbol: u32) {
        self.units += table.symbol_cost(symbol) as u64;
    }
}

/// Frequency model over a small alphabet that adapts as symbols are coded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptiveModel {
    freq: Vec<u32>,
    total: u32,
}

impl AdaptiveModel {
    pub const INCREMENT: u32 = 24;
    pub const LIMIT: u32 = 1 << 16;

    pub fn new(symbols: usize) -> Self {
        AdaptiveModel {
            freq: vec![1; symbols],
            total: symbols as u32,
        }
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.freq
    }

    pub fn cost(&self, symbol: usize) -> u32 {
        cost_units(self.freq[symbol], self.total)
    }

    pub fn update(&mut self, symbol: usize) {
        self.freq[symbol] += Self::INCREMENT;
        self.total += Self::INCREMENT;
        if self.total > Self::LIMIT {
            self.total = 0;
            for f in &mut self.freq {
                *f = f.div_ceil(2);
                self.total += *f;
            }
        }
    }

    pub fn encode<S: SymbolSink + ?Sized>(&mut self, sink: &mut S, symbol: usize) {
        if self.freq.len() > 1 {
            encode_from(sink, &self.freq, symbol);
        }
        self.update(symbol);
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder) -> Result<usize> {
        let symbol = if self.freq.len() > 1 { dec.symbol_from(&self.freq)? } else { 0 };
        self.update(symbol);
        Ok(symbol)
    }
}
