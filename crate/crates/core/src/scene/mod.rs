//! 3D Gaussian splat cloud model, removal sets, and the geometric predicates
//! the refinement builds on.
//!
//! Scales live in log-space exactly as stored on disk; exponentiation happens
//! at predicate time so files round-trip losslessly. Two splats "intersect"
//! when the distance between their centers is strictly smaller than the sum
//! of their largest scales — the sphere approximation used to bound the
//! refinement's candidate set.

mod io;
mod ply;

pub use io::{
    load_feature_sidecar, load_removal, save_feature_sidecar, save_removal_bitmask,
    save_removal_indices, FeatureSidecar,
};
pub use ply::{load_ply, save_ply};

use crate::error::{Error, Result};
use crate::spatial::{dist2, UniformGrid};

/// Semantic feature vectors attached to a cloud, row-major `count x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dim: usize,
    pub data: Vec<f32>,
}

/// One unknown scalar PLY property preserved byte-exactly for round-trips.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ExtraProperty {
    pub name: String,
    pub scalar: ply::PlyScalar,
    pub data: Vec<u8>,
}

/// A 3D Gaussian splat cloud in the standard interchange layout.
#[derive(Debug, Clone)]
pub struct GaussianCloud {
    positions: Vec<[f32; 3]>,
    log_scales: Vec<[f32; 3]>,
    rotations: Vec<[f32; 4]>,
    opacity_logits: Vec<f32>,
    /// Spherical-harmonic color coefficients (`f_dc_*` then `f_rest_*`),
    /// row-major `count x color_dim`, passed through untouched.
    color_coeffs: Vec<f32>,
    color_dim: usize,
    features: Option<Features>,
    extras: Vec<ExtraProperty>,
    /// Vertex property names in file order, for layout-preserving writes.
    layout: Vec<String>,
}

impl GaussianCloud {
    /// Builds a cloud from raw arrays. `color_coeffs` must be `n x color_dim`
    /// with `color_dim >= 3` (the DC coefficients).
    pub fn from_parts(
        positions: Vec<[f32; 3]>,
        log_scales: Vec<[f32; 3]>,
        rotations: Vec<[f32; 4]>,
        opacity_logits: Vec<f32>,
        color_coeffs: Vec<f32>,
        color_dim: usize,
        features: Option<Features>,
    ) -> Result<Self> {
        let n = positions.len();
        if color_dim < 3 {
            return Err(Error::InvalidInput(format!(
                "color_dim must be at least 3 (DC coefficients), got {color_dim}"
            )));
        }
        if log_scales.len() != n
            || rotations.len() != n
            || opacity_logits.len() != n
            || color_coeffs.len() != n * color_dim
        {
            return Err(Error::InvalidInput(
                "cloud arrays disagree on splat count".into(),
            ));
        }
        let mut layout: Vec<String> = ["x", "y", "z"].map(String::from).to_vec();
        for k in 0..3 {
            layout.push(format!("f_dc_{k}"));
        }
        for k in 0..color_dim - 3 {
            layout.push(format!("f_rest_{k}"));
        }
        layout.push("opacity".into());
        for k in 0..3 {
            layout.push(format!("scale_{k}"));
        }
        for k in 0..4 {
            layout.push(format!("rot_{k}"));
        }
        if let Some(f) = &features {
            for k in 0..f.dim {
                layout.push(format!("feature_{k}"));
            }
        }
        let mut cloud = GaussianCloud {
            positions,
            log_scales,
            rotations,
            opacity_logits,
            color_coeffs,
            color_dim,
            features,
            extras: Vec::new(),
            layout,
        };
        cloud.normalize_rotations()?;
        cloud.validate()?;
        Ok(cloud)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_ply_parts(
        positions: Vec<[f32; 3]>,
        log_scales: Vec<[f32; 3]>,
        rotations: Vec<[f32; 4]>,
        opacity_logits: Vec<f32>,
        color_coeffs: Vec<f32>,
        color_dim: usize,
        features: Option<Features>,
        extras: Vec<ExtraProperty>,
        layout: Vec<String>,
    ) -> Result<Self> {
        let mut cloud = GaussianCloud {
            positions,
            log_scales,
            rotations,
            opacity_logits,
            color_coeffs,
            color_dim,
            features,
            extras,
            layout,
        };
        cloud.normalize_rotations()?;
        cloud.validate()?;
        Ok(cloud)
    }

    fn normalize_rotations(&mut self) -> Result<()> {
        for (i, q) in self.rotations.iter_mut().enumerate() {
            let n2: f64 = q.iter().map(|v| *v as f64 * *v as f64).sum();
            if !n2.is_finite() || n2 == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "splat {i} has a degenerate quaternion {q:?}"
                )));
            }
            // Already unit within f32 precision: leave the bits alone so a
            // load/save cycle is the identity.
            if (n2 - 1.0).abs() > 1e-6 {
                let inv = 1.0 / n2.sqrt();
                for v in q.iter_mut() {
                    *v = (*v as f64 * inv) as f32;
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "splat {i} has non-finite position {p:?}"
                )));
            }
        }
        for (i, s) in self.log_scales.iter().enumerate() {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "splat {i} has non-finite log-scales {s:?}"
                )));
            }
        }
        if let Some(f) = &self.features {
            if f.dim == 0 || f.data.len() != self.len() * f.dim {
                return Err(Error::InvalidInput(format!(
                    "feature array is {} values for {} splats x dim {}",
                    f.data.len(),
                    self.len(),
                    f.dim
                )));
            }
            if f.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite feature value".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> [f32; 3] {
        self.positions[i]
    }

    pub fn position_f64(&self, i: usize) -> [f64; 3] {
        self.positions[i].map(|v| v as f64)
    }

    pub fn log_scales_of(&self, i: usize) -> [f32; 3] {
        self.log_scales[i]
    }

    pub fn rotation(&self, i: usize) -> [f32; 4] {
        self.rotations[i]
    }

    pub fn opacity_logit(&self, i: usize) -> f32 {
        self.opacity_logits[i]
    }

    pub fn color_dim(&self) -> usize {
        self.color_dim
    }

    pub fn color_coeffs_of(&self, i: usize) -> &[f32] {
        &self.color_coeffs[i * self.color_dim..(i + 1) * self.color_dim]
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn feature(&self, i: usize) -> Option<&[f32]> {
        self.features
            .as_ref()
            .map(|f| &f.data[i * f.dim..(i + 1) * f.dim])
    }

    /// Attaches externally stored features (e.g. from a sidecar file),
    /// replacing any existing ones. The write layout's feature columns are
    /// rebuilt to match the new dimension.
    pub fn set_features(&mut self, features: Features) -> Result<()> {
        if features.dim == 0 || features.data.len() != self.len() * features.dim {
            return Err(Error::InvalidInput(format!(
                "feature array is {} values for {} splats x dim {}",
                features.data.len(),
                self.len(),
                features.dim
            )));
        }
        if features.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        let is_feature_column = |n: &String| {
            n.strip_prefix("feature_")
                .is_some_and(|s| s.parse::<usize>().is_ok())
                && !self.extras.iter().any(|e| e.name == *n)
        };
        self.layout.retain(|n| !is_feature_column(n));
        for k in 0..features.dim {
            self.layout.push(format!("feature_{k}"));
        }
        self.features = Some(features);
        Ok(())
    }

    pub(crate) fn extras(&self) -> &[ExtraProperty] {
        &self.extras
    }

    pub(crate) fn layout(&self) -> &[String] {
        &self.layout
    }
}

/// Boolean removal flags over a cloud, with a provenance tag naming the
/// method that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalSet {
    pub flags: Vec<bool>,
    pub provenance: String,
}

impl RemovalSet {
    pub fn from_flags(flags: Vec<bool>, provenance: impl Into<String>) -> Self {
        RemovalSet {
            flags,
            provenance: provenance.into(),
        }
    }

    pub fn from_indices(
        cloud_len: usize,
        indices: &[usize],
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let mut flags = vec![false; cloud_len];
        for &i in indices {
            if i >= cloud_len {
                return Err(Error::InvalidInput(format!(
                    "removal index {i} out of range for cloud of {cloud_len}"
                )));
            }
            flags[i] = true;
        }
        Ok(RemovalSet {
            flags,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Number of flagged splats.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.flags.get(i).copied().unwrap_or(false)
    }

    pub fn union(&self, other: &RemovalSet, provenance: impl Into<String>) -> Result<RemovalSet> {
        if self.len() != other.len() {
            return Err(Error::InvalidInput(format!(
                "removal sets cover different clouds: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(RemovalSet {
            flags: self
                .flags
                .iter()
                .zip(&other.flags)
                .map(|(a, b)| *a || *b)
                .collect(),
            provenance: provenance.into(),
        })
    }

    pub fn is_superset_of(&self, other: &RemovalSet) -> bool {
        self.len() == other.len()
            && self
                .flags
                .iter()
                .zip(&other.flags)
                .all(|(a, b)| *a || !*b)
    }
}

/// The largest of a splat's three scales, `max_j exp(log_scale_j)`.
pub fn largest_scale(cloud: &GaussianCloud, i: usize) -> Result<f64> {
    if i >= cloud.len() {
        return Err(Error::InvalidInput(format!(
            "splat index {i} out of range for cloud of {}",
            cloud.len()
        )));
    }
    Ok(cloud.log_scales[i]
        .iter()
        .map(|s| (*s as f64).exp())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Sphere-approximation intersection test: centers strictly closer than the
/// sum of the two largest scales.
pub fn intersects(cloud: &GaussianCloud, i: usize, j: usize) -> Result<bool> {
    let si = largest_scale(cloud, i)?;
    let sj = largest_scale(cloud, j)?;
    let d2 = dist2(cloud.position_f64(i), cloud.position_f64(j));
    let sum = si + sj;
    Ok(d2 < sum * sum)
}

/// All seed splats plus every splat intersecting at least one seed splat,
/// ascending. The node set of the refinement graph.
///
/// Accelerated with a uniform grid over the seed splats; equivalent to the
/// exhaustive pairwise scan.
pub fn candidate_filter(cloud: &GaussianCloud, seed: &RemovalSet) -> Result<Vec<usize>> {
    if seed.len() != cloud.len() {
        return Err(Error::InvalidInput(format!(
            "seed removal set covers {} splats, cloud has {}",
            seed.len(),
            cloud.len()
        )));
    }
    if seed.is_empty() {
        return Err(Error::GraphEmpty("seed removal set is empty".into()));
    }

    let n = cloud.len();
    let scales: Vec<f64> = (0..n)
        .map(|i| largest_scale(cloud, i))
        .collect::<Result<_>>()?;
    let positions: Vec<[f64; 3]> = (0..n).map(|i| cloud.position_f64(i)).collect();
    let s_max = scales.iter().cloned().fold(0.0f64, f64::max);

    let grid = UniformGrid::build(
        &positions,
        (0..n).filter(|&i| seed.flags[i]),
        s_max.max(1e-9),
    );

    let mut keep = seed.flags.clone();
    for q in 0..n {
        if keep[q] {
            continue;
        }
        let radius = scales[q] + s_max;
        let mut hit = false;
        grid.for_each_candidate(positions[q], radius, |s| {
            if !hit {
                let sum = scales[q] + scales[s];
                if dist2(positions[q], positions[s]) < sum * sum {
                    hit = true;
                }
            }
        });
        keep[q] = hit;
    }
    Ok((0..n).filter(|&i| keep[i]).collect())
}
