//! Raster data model: binary masks, mask sets, depth maps, and the IoU
//! primitive every metric builds on.
//!
//! Masks are bit-packed so that set-overlap counting (the hot path of the
//! mask-set matching) runs on whole words instead of per pixel.

mod mask_io;
mod pfm;

pub use mask_io::{load_mask, load_mask_set, save_mask};
pub use pfm::{load_depth, save_depth};

use crate::error::{Error, Result};

/// 2D boolean raster, row-major, `true` = foreground.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count_ones()
        )
    }
}

impl BinaryMask {
    /// All-background mask. Width and height must both be positive.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = width as usize * height as usize;
        Ok(BinaryMask {
            width,
            height,
            words: vec![0; n.div_ceil(64)],
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        Ok(mask)
    }

    /// Builds from a row-major boolean slice of length `width * height`.
    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "bit slice length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Self::from_fn(width, height, |x, y| bits[(y * width + x) as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        let i = self.index(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Number of foreground pixels.
    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection_count(&self, other: &Self) -> Result<u64> {
        self.check_same_dims(other, "intersection")?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    /// Foreground/background flipped. Trailing bits of the last word stay zero.
    pub fn complement(&self) -> Self {
        let mut out = BinaryMask {
            width: self.width,
            height: self.height,
            words: self.words.iter().map(|w| !w).collect(),
        };
        let tail = self.len() % 64;
        if tail != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        out
    }

    pub(crate) fn check_same_dims(&self, other: &Self, context: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
                context,
            ));
        }
        Ok(())
    }
}

/// Intersection-over-union of two same-sized masks.
///
/// Defined as 1.0 when both masks are empty (the union is empty and the two
/// masks agree everywhere).
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_dims(b, "iou")?;
    let inter = a.intersection_count(b)?;
    let union = a.count_ones() + b.count_ones() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Ordered collection of same-sized masks; index identity is stable and used
/// for deterministic tie-breaking downstream.
#[derive(Debug, Clone, Default)]
pub struct MaskSet {
    masks: Vec<BinaryMask>,
}

impl MaskSet {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self> {
        if let Some(first) = masks.first() {
            let dims = first.dims();
            let offenders: Vec<String> = masks
                .iter()
                .enumerate()
                .filter(|(_, m)| m.dims() != dims)
                .map(|(i, m)| format!("#{i} is {}x{}", m.width(), m.height()))
                .collect();
            if !offenders.is_empty() {
                return Err(Error::MixedDimensions(format!(
                    "expected {}x{}, but {}",
                    dims.0,
                    dims.1,
                    offenders.join(", ")
                )));
            }
        }
        Ok(MaskSet { masks })
    }

    pub fn empty() -> Self {
        MaskSet { masks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&BinaryMask> {
        self.masks.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &BinaryMask> {
        self.masks.iter()
    }

    /// Dimensions shared by all members, `None` for an empty set.
    pub fn dims(&self) -> Option<(u32, u32)> {
        self.masks.first().map(|m| m.dims())
    }
}

/// 2D float raster of rendered depths with a per-pixel validity channel.
///
/// Invalid pixels mark locations where the renderer produced no depth (no
/// primitive hit, NaN, negative or non-finite values).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a depth map; non-finite or negative entries are marked invalid.
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "depth dimensions must be positive, got {width}x{height}"
            )));
        }
        let n = width as usize * height as usize;
        if values.len() != n {
            return Err(Error::InvalidInput(format!(
                "depth value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        let valid = values.iter().map(|v| v.is_finite() && *v >= 0.0).collect();
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}
