//! Binary little-endian PLY I/O for Gaussian splat clouds.
//!
//! The vertex layout follows the common splat interchange convention:
//! `x,y,z`, `f_dc_0..2` (+ optional contiguous `f_rest_*`), `opacity`,
//! `scale_0..2` (log-space), `rot_0..3`, plus optional contiguous
//! `feature_*` columns for semantic features. Any other scalar property is
//! preserved byte-exactly and written back in the original order.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{ExtraProperty, Features, GaussianCloud, RemovalSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PlyScalar {
    Char,
    UChar,
    Short,
    UShort,
    Int,
    UInt,
    Float,
    Double,
}

impl PlyScalar {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "char" | "int8" => Some(Self::Char),
            "uchar" | "uint8" => Some(Self::UChar),
            "short" | "int16" => Some(Self::Short),
            "ushort" | "uint16" => Some(Self::UShort),
            "int" | "int32" => Some(Self::Int),
            "uint" | "uint32" => Some(Self::UInt),
            "float" | "float32" => Some(Self::Float),
            "double" | "float64" => Some(Self::Double),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Char => "char",
            Self::UChar => "uchar",
            Self::Short => "short",
            Self::UShort => "ushort",
            Self::Int => "int",
            Self::UInt => "uint",
            Self::Float => "float",
            Self::Double => "double",
        }
    }

    fn size(&self) -> usize {
        match self {
            Self::Char | Self::UChar => 1,
            Self::Short | Self::UShort => 2,
            Self::Int | Self::UInt | Self::Float => 4,
            Self::Double => 8,
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, PlyScalar)>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let end = find_header_end(bytes)?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::PlyParse("header is not valid UTF-8".into()))?;

    let mut format_seen = false;
    let mut vertex: Option<(usize, Vec<(String, PlyScalar)>)> = None;
    let mut in_vertex = false;

    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut it = line.split_whitespace();
        match it.next().unwrap_or("") {
            "ply" | "comment" | "obj_info" | "end_header" => {}
            "format" => {
                match it.next().unwrap_or("") {
                    "binary_little_endian" => {}
                    "ascii" => return Err(Error::AsciiPly),
                    other => {
                        return Err(Error::PlyParse(format!("unsupported format `{other}`")))
                    }
                }
                format_seen = true;
            }
            "element" => {
                let name = it
                    .next()
                    .ok_or_else(|| Error::PlyParse("element without a name".into()))?;
                let count: usize = it
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::PlyParse(format!("bad count for element {name}")))?;
                if name == "vertex" {
                    if vertex.is_some() {
                        return Err(Error::PlyParse("duplicate vertex element".into()));
                    }
                    vertex = Some((count, Vec::new()));
                    in_vertex = true;
                } else if count > 0 {
                    return Err(Error::PlyParse(format!(
                        "unsupported element `{name}` with {count} entries"
                    )));
                } else {
                    in_vertex = false;
                }
            }
            "property" => {
                if !in_vertex {
                    continue; // property of an empty non-vertex element
                }
                let t = it
                    .next()
                    .ok_or_else(|| Error::PlyParse("property without a type".into()))?;
                if t == "list" {
                    return Err(Error::PlyParse(
                        "list properties are not part of the splat vertex layout".into(),
                    ));
                }
                let scalar = PlyScalar::parse(t)
                    .ok_or_else(|| Error::PlyParse(format!("unknown property type `{t}`")))?;
                let name = it
                    .next()
                    .ok_or_else(|| Error::PlyParse("property without a name".into()))?;
                vertex
                    .as_mut()
                    .expect("in_vertex implies vertex element")
                    .1
                    .push((name.to_string(), scalar));
            }
            other => return Err(Error::PlyParse(format!("unknown directive `{other}`"))),
        }
    }

    if !format_seen {
        return Err(Error::PlyParse("missing format line".into()));
    }
    let (vertex_count, properties) =
        vertex.ok_or_else(|| Error::PlyParse("no vertex element".into()))?;
    Ok(Header {
        vertex_count,
        properties,
        data_offset: end,
    })
}

fn find_header_end(bytes: &[u8]) -> Result<usize> {
    const PAT: &[u8] = b"end_header";
    if !bytes.starts_with(b"ply") {
        return Err(Error::PlyParse("missing `ply` magic".into()));
    }
    let mut i = 0;
    while i + PAT.len() <= bytes.len() {
        if &bytes[i..i + PAT.len()] == PAT {
            let mut k = i + PAT.len();
            if k < bytes.len() && bytes[k] == b'\r' {
                k += 1;
            }
            if k < bytes.len() && bytes[k] == b'\n' {
                return Ok(k + 1);
            }
        }
        i += 1;
    }
    Err(Error::PlyParse("missing end_header".into()))
}

/// Collects the contiguous run `prefix0..prefixD-1` from a property name map,
/// erroring on gaps.
fn contiguous_run(names: &HashMap<&str, usize>, prefix: &str) -> Result<usize> {
    let mut dim = 0;
    while names.contains_key(format!("{prefix}{dim}").as_str()) {
        dim += 1;
    }
    for name in names.keys() {
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= dim {
                    return Err(Error::PlyParse(format!(
                        "{prefix}{k} present but {prefix}{} missing",
                        dim
                    )));
                }
            }
        }
    }
    Ok(dim)
}

/// Loads a splat cloud from a binary little-endian PLY file.
pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
    parse_ply(&bytes)
}

pub(crate) fn parse_ply(bytes: &[u8]) -> Result<GaussianCloud> {
    let header = parse_header(bytes)?;
    let n = header.vertex_count;

    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut stride = 0usize;
    for (_, scalar) in &header.properties {
        offsets.push(stride);
        stride += scalar.size();
    }
    let data = &bytes[header.data_offset..];
    if data.len() < n * stride {
        return Err(Error::PlyParse(format!(
            "payload truncated: need {} bytes, have {}",
            n * stride,
            data.len()
        )));
    }

    let names: HashMap<&str, usize> = header
        .properties
        .iter()
        .enumerate()
        .map(|(i, (name, _))| (name.as_str(), i))
        .collect();
    if names.len() != header.properties.len() {
        return Err(Error::PlyParse("duplicate vertex property".into()));
    }

    let float_col = |name: &str| -> Result<usize> {
        let idx = *names
            .get(name)
            .ok_or_else(|| Error::MissingProperty(name.to_string()))?;
        match header.properties[idx].1 {
            PlyScalar::Float => Ok(idx),
            other => Err(Error::PlyParse(format!(
                "property `{name}` must be float, got {}",
                other.name()
            ))),
        }
    };

    let xyz = [float_col("x")?, float_col("y")?, float_col("z")?];
    let scale = [
        float_col("scale_0")?,
        float_col("scale_1")?,
        float_col("scale_2")?,
    ];
    let rot = [
        float_col("rot_0")?,
        float_col("rot_1")?,
        float_col("rot_2")?,
        float_col("rot_3")?,
    ];
    let opacity = float_col("opacity")?;
    let dc = [
        float_col("f_dc_0")?,
        float_col("f_dc_1")?,
        float_col("f_dc_2")?,
    ];
    let n_rest = contiguous_run(&names, "f_rest_")?;
    let rest_cols: Vec<usize> = (0..n_rest)
        .map(|k| float_col(&format!("f_rest_{k}")))
        .collect::<Result<_>>()?;
    let n_feat = contiguous_run(&names, "feature_")?;
    let feat_cols: Vec<usize> = (0..n_feat)
        .map(|k| float_col(&format!("feature_{k}")))
        .collect::<Result<_>>()?;

    let known = |name: &str| -> bool {
        matches!(
            name,
            "x" | "y"
                | "z"
                | "opacity"
                | "scale_0"
                | "scale_1"
                | "scale_2"
                | "rot_0"
                | "rot_1"
                | "rot_2"
                | "rot_3"
                | "f_dc_0"
                | "f_dc_1"
                | "f_dc_2"
        ) || name
            .strip_prefix("f_rest_")
            .is_some_and(|s| s.parse::<usize>().is_ok())
            || name
                .strip_prefix("feature_")
                .is_some_and(|s| s.parse::<usize>().is_ok())
    };

    let read_f32 = |row: usize, col: usize| -> f32 {
        let off = row * stride + offsets[col];
        f32::from_le_bytes([data[off], data[off + 1], data[off + 2], data[off + 3]])
    };

    let color_dim = 3 + n_rest;
    let mut positions = Vec::with_capacity(n);
    let mut log_scales = Vec::with_capacity(n);
    let mut rotations = Vec::with_capacity(n);
    let mut opacity_logits = Vec::with_capacity(n);
    let mut color_coeffs = Vec::with_capacity(n * color_dim);
    let mut feature_data = Vec::with_capacity(n * n_feat);

    for row in 0..n {
        positions.push(xyz.map(|c| read_f32(row, c)));
        log_scales.push(scale.map(|c| read_f32(row, c)));
        rotations.push(rot.map(|c| read_f32(row, c)));
        opacity_logits.push(read_f32(row, opacity));
        for &c in &dc {
            color_coeffs.push(read_f32(row, c));
        }
        for &c in &rest_cols {
            color_coeffs.push(read_f32(row, c));
        }
        for &c in &feat_cols {
            feature_data.push(read_f32(row, c));
        }
    }

    let mut extras = Vec::new();
    for (idx, (name, scalar)) in header.properties.iter().enumerate() {
        if known(name) {
            continue;
        }
        let size = scalar.size();
        let mut raw = Vec::with_capacity(n * size);
        for row in 0..n {
            let off = row * stride + offsets[idx];
            raw.extend_from_slice(&data[off..off + size]);
        }
        extras.push(ExtraProperty {
            name: name.clone(),
            scalar: *scalar,
            data: raw,
        });
    }

    let features = if n_feat > 0 {
        Some(Features {
            dim: n_feat,
            data: feature_data,
        })
    } else {
        None
    };
    let layout: Vec<String> = header
        .properties
        .iter()
        .map(|(name, _)| name.clone())
        .collect();

    GaussianCloud::from_ply_parts(
        positions,
        log_scales,
        rotations,
        opacity_logits,
        color_coeffs,
        color_dim,
        features,
        extras,
        layout,
    )
}

enum Slot<'a> {
    Pos(usize),
    Scale(usize),
    Rot(usize),
    Opacity,
    Color(usize),
    Feature(usize),
    Extra(&'a ExtraProperty),
}

/// Writes a cloud as binary little-endian PLY in its recorded property
/// layout. Splats flagged in `removal` are dropped; surviving splats keep
/// their relative order.
pub fn save_ply(
    cloud: &GaussianCloud,
    removal: Option<&RemovalSet>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(r) = removal {
        if r.len() != cloud.len() {
            return Err(Error::InvalidInput(format!(
                "removal set covers {} splats, cloud has {}",
                r.len(),
                cloud.len()
            )));
        }
    }

    let feature_dim = cloud.features().map_or(0, |f| f.dim);
    let mut slots: Vec<(Slot, PlyScalar)> = Vec::with_capacity(cloud.layout().len());
    for name in cloud.layout() {
        // Extras take precedence: names that merely look like typed columns
        // (e.g. an f_dc_3 beyond the canonical run) were preserved there.
        if let Some(extra) = cloud.extras().iter().find(|e| e.name == *name) {
            slots.push((Slot::Extra(extra), extra.scalar));
            continue;
        }
        let slot = match name.as_str() {
            "x" => Slot::Pos(0),
            "y" => Slot::Pos(1),
            "z" => Slot::Pos(2),
            "opacity" => Slot::Opacity,
            "scale_0" => Slot::Scale(0),
            "scale_1" => Slot::Scale(1),
            "scale_2" => Slot::Scale(2),
            "rot_0" => Slot::Rot(0),
            "rot_1" => Slot::Rot(1),
            "rot_2" => Slot::Rot(2),
            "rot_3" => Slot::Rot(3),
            _ => {
                let color = name
                    .strip_prefix("f_dc_")
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&k| k < 3)
                    .or_else(|| {
                        name.strip_prefix("f_rest_")
                            .and_then(|s| s.parse::<usize>().ok())
                            .map(|k| 3 + k)
                    })
                    .filter(|&k| k < cloud.color_dim());
                let feature = name
                    .strip_prefix("feature_")
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&k| k < feature_dim);
                if let Some(k) = color {
                    Slot::Color(k)
                } else if let Some(k) = feature {
                    Slot::Feature(k)
                } else {
                    return Err(Error::PlyParse(format!(
                        "layout names unknown property `{name}`"
                    )));
                }
            }
        };
        slots.push((slot, PlyScalar::Float));
    }

    let survivors: Vec<usize> = (0..cloud.len())
        .filter(|&i| removal.is_none_or(|r| !r.flags[i]))
        .collect();

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", survivors.len()));
    for (name, (_, scalar)) in cloud.layout().iter().zip(&slots) {
        header.push_str(&format!("property {} {}\n", scalar.name(), name));
    }
    header.push_str("end_header\n");

    let mut out = Vec::with_capacity(header.len() + survivors.len() * 4 * slots.len());
    out.extend_from_slice(header.as_bytes());
    for &i in &survivors {
        for (slot, scalar) in &slots {
            match slot {
                Slot::Pos(a) => out.extend_from_slice(&cloud.position(i)[*a].to_le_bytes()),
                Slot::Scale(a) => {
                    out.extend_from_slice(&cloud.log_scales_of(i)[*a].to_le_bytes())
                }
                Slot::Rot(a) => out.extend_from_slice(&cloud.rotation(i)[*a].to_le_bytes()),
                Slot::Opacity => out.extend_from_slice(&cloud.opacity_logit(i).to_le_bytes()),
                Slot::Color(k) => {
                    out.extend_from_slice(&cloud.color_coeffs_of(i)[*k].to_le_bytes())
                }
                Slot::Feature(k) => {
                    let f = cloud.feature(i).ok_or_else(|| {
                        Error::PlyParse("layout has feature columns but cloud has none".into())
                    })?;
                    out.extend_from_slice(&f[*k].to_le_bytes());
                }
                Slot::Extra(extra) => {
                    let size = scalar.size();
                    out.extend_from_slice(&extra.data[i * size..(i + 1) * size]);
                }
            }
        }
    }

    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    file.write_all(&out).map_err(|e| Error::io_at(path, e))
}
