//! Portable FloatMap (PFM) depth I/O.
//!
//! Single-channel `Pf` maps only. The header scale's sign selects the byte
//! order (negative = little-endian); its magnitude is not applied to the
//! samples. PFM stores rows bottom-up; rows are normalized to top-down on
//! load and written back bottom-up so other tools agree on orientation.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::DepthMap;

/// Loads a single-channel PFM file as a depth map.
///
/// NaN, negative, and non-finite samples are marked invalid.
pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    parse_pfm(&bytes).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut pos = 0usize;
    let magic = read_token(bytes, &mut pos)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => {
            return Err(Error::InvalidInput(
                "PFM has 3 channels (PF); depth maps must be single-channel (Pf)".into(),
            ))
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "not a PFM file (magic `{other}`)"
            )))
        }
    }
    let width: u32 = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::InvalidInput("malformed PFM width".into()))?;
    let height: u32 = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::InvalidInput("malformed PFM height".into()))?;
    let scale: f32 = read_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::InvalidInput("malformed PFM scale".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "PFM dimensions must be positive, got {width}x{height}"
        )));
    }
    if scale == 0.0 {
        return Err(Error::InvalidInput("PFM scale must be non-zero".into()));
    }
    let little_endian = scale < 0.0;

    let n = width as usize * height as usize;
    let data = &bytes[pos..];
    if data.len() < n * 4 {
        return Err(Error::InvalidInput(format!(
            "PFM payload truncated: need {} bytes, have {}",
            n * 4,
            data.len()
        )));
    }

    // PFM rasters run bottom-up; flip to top-down.
    let mut values = vec![0f32; n];
    for row in 0..height as usize {
        let src_row = height as usize - 1 - row;
        for col in 0..width as usize {
            let off = (src_row * width as usize + col) * 4;
            let raw = [data[off], data[off + 1], data[off + 2], data[off + 3]];
            values[row * width as usize + col] = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    DepthMap::new(width, height, values)
}

fn read_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::InvalidInput("truncated PFM header".into()));
    }
    let token = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::InvalidInput("non-ASCII PFM header".into()))?
        .to_string();
    // Exactly one whitespace separator is consumed; binary data follows the
    // single newline after the scale token.
    *pos += 1;
    Ok(token)
}

/// Writes a depth map as little-endian single-channel PFM (scale -1.0).
///
/// Invalid pixels are written as NaN so the validity channel round-trips.
pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    let header = format!("Pf\n{} {}\n-1.0\n", depth.width(), depth.height());
    file.write_all(header.as_bytes())
        .map_err(|e| Error::io_at(path, e))?;
    let (w, h) = (depth.width() as usize, depth.height() as usize);
    let mut payload = Vec::with_capacity(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let idx = row * w + col;
            let v = if depth.valid()[idx] {
                depth.values()[idx]
            } else {
                f32::NAN
            };
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&payload).map_err(|e| Error::io_at(path, e))
}
