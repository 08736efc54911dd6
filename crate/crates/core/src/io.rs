//! Binary grid formats.
//!
//! All three share a 12-byte header: four magic bytes, then little-endian
//! `u32` width and height. The payload follows in row-major order.
//!
//! | magic  | payload                                   |
//! |--------|-------------------------------------------|
//! | `DFD1` | `f32` LE depth per pixel, NaN = invalid   |
//! | `DFM1` | `u8` category code (0 sky, 1 fg, 2 bg, 255 unknown) |
//! | `DFS1` | `u8` raw segmentation class id            |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::semantic::{Category, CategoryMapping, SemanticCategoryMask};

pub const DEPTH_MAGIC: &[u8; 4] = b"DFD1";
pub const MASK_MAGIC: &[u8; 4] = b"DFM1";
pub const RAW_SEMANTIC_MAGIC: &[u8; 4] = b"DFS1";

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], width: usize, height: usize) -> Result<()> {
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
    };
    w.write_all(magic)?;
    w.write_all(&dim(width)?.to_le_bytes())?;
    w.write_all(&dim(height)?.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(usize, usize)> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &head[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let width = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    Ok((width, height))
}

fn read_payload<R: Read>(r: &mut R, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len);
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Format(format!(
            "truncated payload: expected {len} bytes, found {}",
            buf.len()
        )));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(buf)
}

fn pixel_count(width: usize, height: usize) -> Result<usize> {
    width
        .checked_mul(height)
        .ok_or_else(|| Error::Format(format!("{width}x{height} overflows")))
}

/// Writes an arbitrary `f32` grid with the depth header. Used for gradient
/// grids, which may hold zero or negative values.
pub fn encode_grid<W: Write>(mut w: W, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if data.len() != pixel_count(width, height)? {
        return Err(Error::GridLength {
            width,
            height,
            len: data.len(),
        });
    }
    write_header(&mut w, DEPTH_MAGIC, width, height)?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads a `DFD1` payload without interpreting values.
pub fn decode_grid<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
    let (width, height) = read_header(&mut r, DEPTH_MAGIC)?;
    let n = pixel_count(width, height)?;
    let bytes = read_payload(&mut r, n * 4)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((width, height, data))
}

pub fn encode_depth<W: Write>(w: W, map: &DepthMap) -> Result<()> {
    encode_grid(w, map.width(), map.height(), map.as_slice())
}

pub fn decode_depth<R: Read>(r: R) -> Result<DepthMap> {
    let (width, height, data) = decode_grid(r)?;
    for (index, v) in data.iter().enumerate() {
        if !v.is_nan() && !v.is_finite() {
            return Err(Error::Format(format!(
                "non-finite depth {v} at pixel {index}"
            )));
        }
    }
    DepthMap::new(width, height, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_depth(path: impl AsRef<Path>, map: &DepthMap) -> Result<()> {
    encode_depth(BufWriter::new(File::create(path)?), map)
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    decode_depth(BufReader::new(File::open(path)?))
}

pub fn write_grid(path: impl AsRef<Path>, width: usize, height: usize, data: &[f32]) -> Result<()> {
    encode_grid(BufWriter::new(File::create(path)?), width, height, data)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    decode_grid(BufReader::new(File::open(path)?))
}

pub fn encode_mask<W: Write>(mut w: W, mask: &SemanticCategoryMask) -> Result<()> {
    write_header(&mut w, MASK_MAGIC, mask.width(), mask.height())?;
    let codes: Vec<u8> = mask.as_slice().iter().map(|c| c.code()).collect();
    w.write_all(&codes)?;
    w.flush()?;
    Ok(())
}

pub fn decode_mask<R: Read>(mut r: R) -> Result<SemanticCategoryMask> {
    let (width, height) = read_header(&mut r, MASK_MAGIC)?;
    let bytes = read_payload(&mut r, pixel_count(width, height)?)?;
    let codes = bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            Category::from_code(b)
                .ok_or_else(|| Error::Format(format!("bad category code {b} at pixel {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    SemanticCategoryMask::new(width, height, codes)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SemanticCategoryMask) -> Result<()> {
    encode_mask(BufWriter::new(File::create(path)?), mask)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SemanticCategoryMask> {
    decode_mask(BufReader::new(File::open(path)?))
}

pub fn encode_raw_semantic<W: Write>(
    mut w: W,
    width: usize,
    height: usize,
    classes: &[u8],
) -> Result<()> {
    if classes.len() != pixel_count(width, height)? {
        return Err(Error::GridLength {
            width,
            height,
            len: classes.len(),
        });
    }
    write_header(&mut w, RAW_SEMANTIC_MAGIC, width, height)?;
    w.write_all(classes)?;
    w.flush()?;
    Ok(())
}

pub fn decode_raw_semantic<R: Read>(mut r: R) -> Result<(usize, usize, Vec<u8>)> {
    let (width, height) = read_header(&mut r, RAW_SEMANTIC_MAGIC)?;
    let bytes = read_payload(&mut r, pixel_count(width, height)?)?;
    Ok((width, height, bytes))
}

pub fn write_raw_semantic(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    classes: &[u8],
) -> Result<()> {
    encode_raw_semantic(BufWriter::new(File::create(path)?), width, height, classes)
}

/// Reads either a category mask or a raw semantic map, converting the latter
/// through `mapping`.
pub fn read_mask_any(path: impl AsRef<Path>, mapping: &CategoryMapping) -> Result<SemanticCategoryMask> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(RAW_SEMANTIC_MAGIC) {
        let (w, h, raw) = decode_raw_semantic(bytes.as_slice())?;
        mapping.apply(w, h, &raw)
    } else {
        decode_mask(bytes.as_slice())
    }
}
