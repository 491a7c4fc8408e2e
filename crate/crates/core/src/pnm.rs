//! Minimal binary PGM (P5) / PPM (P6) reader and writer used by the
//! SAI-directory converter.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    /// Interleaved samples, row-major.
    pub data: Vec<u16>,
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader("expected a number in PNM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader("PNM header number overflows".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PnmImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedHeader("missing PNM magic".into()));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported PNM variant P{}",
                other as char
            )))
        }
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::MalformedHeader(format!("PNM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing raster separator".into()));
    }
    let raster = &bytes[cur.pos + 1..];
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader("PNM dimensions overflow".into()))?;
    let wide = maxval > 255;
    let expected = if wide { count * 2 } else { count };
    if raster.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: raster.len(),
        });
    }
    let data: Vec<u16> = if wide {
        raster[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..expected].iter().map(|&b| b as u16).collect()
    };
    if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v as usize > maxval) {
        return Err(Error::MalformedHeader(format!(
            "PNM sample {value} at {index} exceeds maxval {maxval}"
        )));
    }
    Ok(PnmImage {
        width,
        height,
        channels,
        maxval: maxval as u16,
        data,
    })
}

pub fn encode(img: &PnmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for &v in &img.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.data.iter().map(|&v| v as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_8_and_16_bit() {
        for maxval in [255u16, 1023] {
            let img = PnmImage {
                width: 3,
                height: 2,
                channels: 3,
                maxval,
                data: (0..18).map(|i| (i * 37) % (maxval + 1)).collect(),
            };
            assert_eq!(decode(&encode(&img)).unwrap(), img);
        }
    }

    #[test]
    fn comments_in_header() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.data, vec![7, 9]);
    }

    #[test]
    fn truncated_raster() {
        let bytes = b"P5 4 4 255\n\x00\x01".to_vec();
        assert!(matches!(decode(&bytes), Err(Error::Truncated { .. })));
    }
}
