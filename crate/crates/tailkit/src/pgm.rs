//! Portable graymap (PGM) reading, plain (`P2`) and raw (`P5`).
//!
//! Only maxval 255 and 65535 are accepted. Raw 16-bit samples are big-endian,
//! as the Netpbm format defines.

use std::fs;
use std::path::Path;

use tailkit_core::raster::{BitDepth, Raster};

use crate::error::{Error, Result};

struct Header {
    plain: bool,
    width: usize,
    height: usize,
    depth: BitDepth,
    /// Byte offset of the first sample (raw) or of the text after maxval (plain).
    data_start: usize,
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        let tok = self
            .next()
            .ok_or_else(|| Error::format(path, format!("malformed header: missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, format!("malformed header: bad {what}")))
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut t = Tokens { bytes, pos: 0 };
    let plain = match t.next() {
        Some(b"P2") => true,
        Some(b"P5") => false,
        _ => return Err(Error::format(path, "malformed header: expected P2 or P5")),
    };
    let width = t.number(path, "width")?;
    let height = t.number(path, "height")?;
    let maxval = t.number(path, "maxval")?;
    let depth = match maxval {
        255 => BitDepth::Eight,
        65535 => BitDepth::Sixteen,
        other => return Err(Error::format(path, format!("unsupported maxval {other}"))),
    };
    if width == 0 || height == 0 {
        return Err(Error::format(path, "malformed header: zero dimension"));
    }
    // Raw data begins after exactly one whitespace byte.
    let data_start = if plain { t.pos } else { t.pos + 1 };
    Ok(Header {
        plain,
        width,
        height,
        depth,
        data_start,
    })
}

pub fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(path, bytes)?;
    let n = h
        .width
        .checked_mul(h.height)
        .ok_or_else(|| Error::format(path, "malformed header: image too large"))?;
    let max = h.depth.max_value();
    let mut pixels = Vec::with_capacity(n);
    if h.plain {
        let mut t = Tokens {
            bytes,
            pos: h.data_start,
        };
        while let Some(tok) = t.next() {
            if pixels.len() == n {
                break;
            }
            let v: u32 = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, "malformed pixel value"))?;
            if v > u32::from(max) {
                return Err(Error::format(path, format!("pixel value {v} exceeds maxval {max}")));
            }
            pixels.push(v as u16);
        }
        if pixels.len() < n {
            return Err(Error::format(
                path,
                format!("truncated pixel data: {} of {n} values", pixels.len()),
            ));
        }
    } else {
        let per = match h.depth {
            BitDepth::Eight => 1,
            BitDepth::Sixteen => 2,
        };
        let body = bytes.get(h.data_start..).unwrap_or(&[]);
        if body.len() < n * per {
            return Err(Error::format(
                path,
                format!("truncated pixel data: {} of {} bytes", body.len(), n * per),
            ));
        }
        match h.depth {
            BitDepth::Eight => pixels.extend(body[..n].iter().map(|&b| u16::from(b))),
            BitDepth::Sixteen => pixels.extend(body[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]))),
        }
    }
    Raster::new(h.width, h.height, h.depth, pixels).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(path, &bytes)
}

/// Encodes a raster as raw `P5`.
pub fn encode_p5(r: &Raster) -> Vec<u8> {
    let maxval = r.depth().max_value();
    let mut out = format!("P5\n{} {}\n{maxval}\n", r.width(), r.height()).into_bytes();
    match r.depth() {
        BitDepth::Eight => out.extend(r.pixels().iter().map(|&p| p as u8)),
        BitDepth::Sixteen => out.extend(r.pixels().iter().flat_map(|p| p.to_be_bytes())),
    }
    out
}
