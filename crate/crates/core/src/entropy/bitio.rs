//! MSB-first bit packing with Exp-Golomb codes, used for headers and side
//! information.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    n: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> u64 {
        self.bytes.len() as u64 * 8 + self.n as u64
    }

    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n == 64 || value >> n == 0);
        for i in (0..n).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1);
            self.n += 1;
            if self.n == 8 {
                self.bytes.push(self.acc as u8);
                self.acc = 0;
                self.n = 0;
            }
        }
    }

    pub fn write_bit(&mut self, bit: bool) {
        self.write_bits(bit as u64, 1);
    }

    /// Exp-Golomb code of order `k`.
    pub fn write_ue(&mut self, value: u64, k: u32) {
        self.write_bits_ue(value, k);
    }

    fn write_bits_ue(&mut self, value: u64, k: u32) {
        let y = value + (1u64 << k);
        let len = 64 - y.leading_zeros();
        self.write_bits(0, len - k - 1);
        self.write_bits(y, len);
    }

    /// Signed Exp-Golomb through the zigzag map `0, −1, 1, −2, …`.
    pub fn write_se(&mut self, value: i64, k: u32) {
        self.write_ue(zigzag(value), k);
    }

    /// Pads with zero bits to a byte boundary and returns the bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            let pad = 8 - self.n;
            self.write_bits(0, pad);
        }
        self.bytes
    }
}

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(z: u64) -> i64 {
    (z >> 1) as i64 ^ -((z & 1) as i64)
}

/// Length in bits of the order-`k` Exp-Golomb code of `value`.
pub fn ue_len(value: u64, k: u32) -> u32 {
    let y = value + (1u64 << k);
    2 * (64 - y.leading_zeros()) - k - 1
}

pub fn se_len(value: i64, k: u32) -> u32 {
    ue_len(zigzag(value), k)
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0 }
    }

    fn bit(&mut self) -> Result<u64> {
        let byte = self.pos / 8;
        let b = *self.bytes.get(byte as usize).ok_or(Error::Truncated {
            expected: byte as usize + 1,
            found: self.bytes.len(),
        })?;
        let v = (b >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Ok(v as u64)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        Ok(self.bit()? == 1)
    }

    pub fn read_ue(&mut self, k: u32) -> Result<u64> {
        let mut zeros = 0;
        while self.bit()? == 0 {
            zeros += 1;
            if zeros + k > 48 {
                return Err(Error::MalformedHeader("Exp-Golomb code too long".into()));
            }
        }
        let rest = self.read_bits(zeros + k)?;
        Ok(((1u64 << (zeros + k)) | rest) - (1u64 << k))
    }

    pub fn read_se(&mut self, k: u32) -> Result<i64> {
        Ok(unzigzag(self.read_ue(k)?))
    }

    /// Skips to the next byte boundary; returns the byte offset reached.
    pub fn align(&mut self) -> usize {
        self.pos = self.pos.div_ceil(8) * 8;
        (self.pos / 8) as usize
    }
}
