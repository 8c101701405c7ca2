//! Mask file I/O: 8-bit single-channel PNG or PGM in, PNG out.
//!
//! A pixel value above 127 is foreground. Multi-channel images are accepted
//! only when all color channels agree on every pixel.

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, MaskSet};

const FG_THRESHOLD: u8 = 127;

/// Loads a binary mask from a PNG or PGM file.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io_at(path, io),
        other => Error::Image(other),
    })?;
    mask_from_image(&img, path)
}

fn mask_from_image(img: &DynamicImage, path: &Path) -> Result<BinaryMask> {
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(gray) => {
            BinaryMask::from_fn(w, h, |x, y| gray.get_pixel(x, y).0[0] > FG_THRESHOLD)
        }
        DynamicImage::ImageLumaA8(gray) => {
            BinaryMask::from_fn(w, h, |x, y| gray.get_pixel(x, y).0[0] > FG_THRESHOLD)
        }
        DynamicImage::ImageRgb8(rgb) => {
            check_unanimous(w, h, path, |x, y| {
                let p = rgb.get_pixel(x, y).0;
                [p[0], p[1], p[2]]
            })?;
            BinaryMask::from_fn(w, h, |x, y| rgb.get_pixel(x, y).0[0] > FG_THRESHOLD)
        }
        DynamicImage::ImageRgba8(rgba) => {
            check_unanimous(w, h, path, |x, y| {
                let p = rgba.get_pixel(x, y).0;
                [p[0], p[1], p[2]]
            })?;
            BinaryMask::from_fn(w, h, |x, y| rgba.get_pixel(x, y).0[0] > FG_THRESHOLD)
        }
        _ => Err(Error::InvalidInput(format!(
            "{}: unsupported pixel format {:?}; masks must be 8-bit",
            path.display(),
            img.color()
        ))),
    }
}

fn check_unanimous(
    w: u32,
    h: u32,
    path: &Path,
    channels: impl Fn(u32, u32) -> [u8; 3],
) -> Result<()> {
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = channels(x, y);
            if r != g || g != b {
                return Err(Error::InvalidInput(format!(
                    "{}: multi-channel mask disagrees at ({x},{y}): rgb=({r},{g},{b})",
                    path.display()
                )));
            }
        }
    }
    Ok(())
}

/// Writes a mask as an 8-bit grayscale PNG (0 background, 255 foreground).
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.get(x, y) { 255u8 } else { 0u8 }])
    });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io_at(path, io),
            other => Error::Image(other),
        })
}

/// Loads every `.png`/`.pgm` file in a directory as one mask set.
///
/// Files are ordered by lexicographic filename; that rank is the stable index
/// identity of the set. Mixed dimensions inside one directory are an error
/// listing the offending files.
pub fn load_mask_set(dir: impl AsRef<Path>) -> Result<MaskSet> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io_at(dir, e))? {
        let entry = entry.map_err(|e| Error::io_at(dir, e))?;
        if !entry.file_type().map_err(|e| Error::io_at(dir, e))?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let lower = name.to_ascii_lowercase();
        if lower.ends_with(".png") || lower.ends_with(".pgm") {
            names.push(name);
        }
    }
    names.sort();

    let mut masks = Vec::with_capacity(names.len());
    let mut dims: Option<(u32, u32)> = None;
    let mut offenders: Vec<String> = Vec::new();
    for name in &names {
        let mask = load_mask(dir.join(name))?;
        match dims {
            None => dims = Some(mask.dims()),
            Some(d) if mask.dims() != d => {
                offenders.push(format!(
                    "{name} is {}x{} (expected {}x{})",
                    mask.width(),
                    mask.height(),
                    d.0,
                    d.1
                ));
            }
            _ => {}
        }
        masks.push(mask);
    }
    if !offenders.is_empty() {
        return Err(Error::MixedDimensions(format!(
            "{}: {}",
            dir.display(),
            offenders.join(", ")
        )));
    }
    MaskSet::new(masks)
}
