//! 8-bit binary PGM (P5) export and import for maps and masks.

use std::path::Path;

use crate::belief_map::SimilarityMap;
use crate::error::{Error, Result};
use crate::grid::Mask;

/// Score to pixel: `round_half_up(score * 255)`.
pub fn to_pixel(score: f64) -> u8 {
    (score.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn encode_map(map: &SimilarityMap) -> Vec<u8> {
    let s = map.spec();
    let px: Vec<u8> = map.scores().iter().map(|&v| to_pixel(v)).collect();
    encode(s.width, s.height, &px)
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let px: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode(mask.width(), mask.height(), &px)
}

pub fn write_map(map: &SimilarityMap, path: &Path) -> Result<()> {
    std::fs::write(path, encode_map(map)).map_err(|e| Error::io(path, e))
}

pub fn write_mask(mask: &Mask, path: &Path) -> Result<()> {
    std::fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}

/// Parses a P5 image with maxval 255: `(width, height, pixels)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::Argument(format!("invalid PGM: {m}"));
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let data = &bytes[i + 1..];
    if data.len() != w * h {
        return Err(bad("pixel count does not match the header"));
    }
    Ok((w, h, data.to_vec()))
}

pub fn read(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::parse(path, e))
}
