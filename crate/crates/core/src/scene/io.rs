//! On-disk formats for removal sets and external feature sidecars.
//!
//! A removal set is a text file: `#`-prefixed header lines followed by either
//! newline-separated splat indices (default) or one `0`/`1` line per splat
//! (`# format: bitmask`). Features can be supplied outside the PLY as a JSON
//! header naming a flat little-endian f32 file of `count x dim` values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Features, RemovalSet};

/// Writes a removal set as a newline-separated index list.
pub fn save_removal_indices(set: &RemovalSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "# format: indices");
    let _ = writeln!(out, "# count: {}", set.len());
    let _ = writeln!(out, "# provenance: {}", set.provenance);
    for i in set.indices() {
        let _ = writeln!(out, "{i}");
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

/// Writes a removal set as one 0/1 line per splat.
pub fn save_removal_bitmask(set: &RemovalSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "# format: bitmask");
    let _ = writeln!(out, "# count: {}", set.len());
    let _ = writeln!(out, "# provenance: {}", set.provenance);
    for f in &set.flags {
        let _ = writeln!(out, "{}", if *f { 1 } else { 0 });
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

/// Loads a removal set for a cloud of `cloud_len` splats, auto-detecting the
/// index-list and bitmask formats.
pub fn load_removal(path: impl AsRef<Path>, cloud_len: usize) -> Result<RemovalSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut format = "indices".to_string();
    let mut provenance = "file".to_string();
    let mut declared_count: Option<usize> = None;
    let mut body: Vec<&str> = Vec::new();

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let header = header.trim();
            if let Some(v) = header.strip_prefix("format:") {
                format = v.trim().to_string();
            } else if let Some(v) = header.strip_prefix("count:") {
                declared_count = Some(v.trim().parse().map_err(|_| {
                    Error::InvalidInput(format!("{}: bad count header `{v}`", path.display()))
                })?);
            } else if let Some(v) = header.strip_prefix("provenance:") {
                provenance = v.trim().to_string();
            }
            continue;
        }
        body.push(line);
    }

    if let Some(c) = declared_count {
        if c != cloud_len {
            return Err(Error::InvalidInput(format!(
                "{}: removal set declares {c} splats, cloud has {cloud_len}",
                path.display()
            )));
        }
    }

    match format.as_str() {
        "indices" => {
            let mut indices = Vec::with_capacity(body.len());
            for line in body {
                indices.push(line.parse::<usize>().map_err(|_| {
                    Error::InvalidInput(format!("{}: bad index `{line}`", path.display()))
                })?);
            }
            RemovalSet::from_indices(cloud_len, &indices, provenance)
        }
        "bitmask" => {
            if body.len() != cloud_len {
                return Err(Error::InvalidInput(format!(
                    "{}: bitmask has {} entries, cloud has {cloud_len}",
                    path.display(),
                    body.len()
                )));
            }
            let mut flags = Vec::with_capacity(cloud_len);
            for line in body {
                flags.push(match line {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "{}: bitmask entries must be 0 or 1, got `{other}`",
                            path.display()
                        )))
                    }
                });
            }
            Ok(RemovalSet::from_flags(flags, provenance))
        }
        other => Err(Error::InvalidInput(format!(
            "{}: unknown removal-set format `{other}`",
            path.display()
        ))),
    }
}

/// JSON header describing an external feature file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub count: usize,
    pub dim: usize,
    /// Path of the flat little-endian f32 payload, relative to this header.
    pub data: String,
}

/// Loads features from a sidecar JSON header plus its binary payload.
pub fn load_feature_sidecar(json_path: impl AsRef<Path>) -> Result<Features> {
    let json_path = json_path.as_ref();
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io_at(json_path, e))?;
    let header: FeatureSidecar = serde_json::from_str(&text)?;
    if header.dim == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: feature dim must be positive",
            json_path.display()
        )));
    }
    let bin_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data);
    let bytes = std::fs::read(&bin_path).map_err(|e| Error::io_at(&bin_path, e))?;
    let expected = header.count * header.dim * 4;
    if bytes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "{}: payload is {} bytes, expected {} ({} x {} f32)",
            bin_path.display(),
            bytes.len(),
            expected,
            header.count,
            header.dim
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Features {
        dim: header.dim,
        data,
    })
}

/// Writes a feature sidecar (JSON header + binary payload) next to each other.
pub fn save_feature_sidecar(
    features: &Features,
    count: usize,
    json_path: impl AsRef<Path>,
) -> Result<()> {
    let json_path = json_path.as_ref();
    let bin_name = json_path
        .file_stem()
        .map(|s| format!("{}.bin", s.to_string_lossy()))
        .unwrap_or_else(|| "features.bin".to_string());
    let bin_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&bin_name);
    let header = FeatureSidecar {
        count,
        dim: features.dim,
        data: bin_name,
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&header)?)
        .map_err(|e| Error::io_at(json_path, e))?;
    let mut payload = Vec::with_capacity(features.data.len() * 4);
    for v in &features.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bin_path, payload).map_err(|e| Error::io_at(&bin_path, e))
}
