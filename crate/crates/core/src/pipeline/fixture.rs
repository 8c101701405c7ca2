//! Synthetic scene fixtures with analytically known metric values.
//!
//! A fixture plants a rectangular object into otherwise flat rasters and
//! (optionally) a two-cluster Gaussian cloud, then simulates a removal of
//! configurable quality: `none` leaves everything untouched, `perfect`
//! erases the object everywhere, and `residual { rho }` leaves the fraction
//! rho of object pixels (and splats) behind. The generator writes a complete
//! manifest plus an `expected.json` with the exact metric values the
//! evaluation must reproduce.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask_sim::DEFAULT_OVERLAP_TAU;
use crate::raster::{save_depth, save_mask, BinaryMask, DepthMap};
use crate::refine::RefineConfig;
use crate::scene::{
    candidate_filter, save_ply, save_removal_indices, Features, GaussianCloud, RemovalSet,
};

use super::{SceneManifest, ViewEntry, MANIFEST_SCHEMA_VERSION};

/// How the simulated removal behaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// Post-removal data identical to pre-removal.
    None,
    /// Object fully erased; no post-removal semantic mask is produced.
    Perfect,
    /// Fraction `rho` of the object's pixels/splats survives the removal.
    Residual { rho: f64 },
}

/// Parameters of the Gaussian-cloud part of a fixture.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaussianFixtureSpec {
    #[serde(default = "default_object_count")]
    pub object_count: usize,
    /// Background splats placed close enough to intersect the object.
    #[serde(default = "default_bridge_count")]
    pub bridge_count: usize,
    /// Background splats far outside any candidate radius.
    #[serde(default = "default_far_count")]
    pub far_count: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
}

fn default_object_count() -> usize {
    50
}
fn default_bridge_count() -> usize {
    14
}
fn default_far_count() -> usize {
    30
}
fn default_feature_dim() -> usize {
    4
}

impl Default for GaussianFixtureSpec {
    fn default() -> Self {
        GaussianFixtureSpec {
            object_count: default_object_count(),
            bridge_count: default_bridge_count(),
            far_count: default_far_count(),
            feature_dim: default_feature_dim(),
        }
    }
}

/// Fixture parameters; the JSON accepted by the `gen-fixture` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    /// Object rectangle as `[x, y, w, h]`.
    #[serde(default = "default_rect")]
    pub object_rect: [u32; 4],
    #[serde(default = "default_views")]
    pub views: usize,
    pub removal: RemovalMode,
    #[serde(default = "default_depth_background")]
    pub depth_background: f32,
    #[serde(default = "default_depth_object")]
    pub depth_object: f32,
    #[serde(default = "default_tiles")]
    pub sam_background_tiles: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussians: Option<GaussianFixtureSpec>,
}

fn default_seed() -> u64 {
    7
}
fn default_side() -> u32 {
    48
}
fn default_rect() -> [u32; 4] {
    [8, 8, 10, 10]
}
fn default_views() -> usize {
    2
}
fn default_depth_background() -> f32 {
    5.0
}
fn default_depth_object() -> f32 {
    2.0
}
fn default_tiles() -> u32 {
    3
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: default_seed(),
            width: default_side(),
            height: default_side(),
            object_rect: default_rect(),
            views: default_views(),
            removal: RemovalMode::None,
            depth_background: default_depth_background(),
            depth_object: default_depth_object(),
            sam_background_tiles: default_tiles(),
            gaussians: None,
        }
    }
}

impl FixtureSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let spec: FixtureSpec = serde_json::from_str(&text)
            .map_err(|e| Error::FixtureSpec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let [x, y, w, h] = self.object_rect;
        if self.width == 0 || self.height == 0 {
            return Err(Error::FixtureSpec("image dimensions must be positive".into()));
        }
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::FixtureSpec(format!(
                "object rect {:?} does not fit into {}x{}",
                self.object_rect, self.width, self.height
            )));
        }
        if self.views == 0 {
            return Err(Error::FixtureSpec("need at least one view".into()));
        }
        if let RemovalMode::Residual { rho } = self.removal {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::FixtureSpec(format!(
                    "residual fraction must lie in [0,1], got {rho}"
                )));
            }
        }
        if !(self.depth_background > 0.0 && self.depth_object > 0.0) {
            return Err(Error::FixtureSpec("depths must be positive".into()));
        }
        if self.depth_background == self.depth_object {
            return Err(Error::FixtureSpec(
                "object and background depths must differ for the change signal".into(),
            ));
        }
        if let Some(g) = &self.gaussians {
            if g.object_count == 0 || g.feature_dim == 0 {
                return Err(Error::FixtureSpec(
                    "gaussian fixture needs object splats and a positive feature dim".into(),
                ));
            }
        }
        Ok(())
    }

    fn residual_fraction(&self) -> f64 {
        match self.removal {
            RemovalMode::None => 1.0,
            RemovalMode::Perfect => 0.0,
            RemovalMode::Residual { rho } => rho,
        }
    }
}

/// Exact metric values a fixture must evaluate to (under default configs),
/// plus the planted cloud structure when Gaussians were generated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureExpectation {
    pub iou_pre: f64,
    pub iou_post: f64,
    pub iou_drop: f64,
    pub sim_sam: f64,
    pub acc_depth: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_splats: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_splats: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bridge_splats: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub far_splats: Vec<usize>,
}

/// Generates a fixture under `out_dir`: rasters, manifest, optional cloud,
/// and the expected metric values. Returns the expectations.
pub fn gen_fixture(spec: &FixtureSpec, out_dir: impl AsRef<Path>) -> Result<FixtureExpectation> {
    spec.validate()?;
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io_at(out, e))?;

    let [ox, oy, ow, oh] = spec.object_rect;
    let object =
        BinaryMask::from_fn(spec.width, spec.height, |x, y| {
            x >= ox && x < ox + ow && y >= oy && y < oy + oh
        })?;
    let area = (ow as usize) * (oh as usize);
    let rho = spec.residual_fraction();
    let residual_px = (rho * area as f64).round() as usize;

    // The first `residual_px` object pixels in row-major order survive.
    let mut kept = 0usize;
    let residual_mask = BinaryMask::from_fn(spec.width, spec.height, |x, y| {
        if object.get(x, y) && kept < residual_px {
            kept += 1;
            true
        } else {
            false
        }
    })?;

    let object_path = out.join("object.png");
    save_mask(&object, &object_path)?;

    let tiles = background_tiles(spec, &object)?;

    let mut views = Vec::with_capacity(spec.views);
    for v in 0..spec.views {
        let view_id = format!("v{v:03}");
        let vdir = out.join("views").join(&view_id);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io_at(&vdir, e))?;

        save_mask(&object, vdir.join("semantic_pre.png"))?;
        let semantic_post = match spec.removal {
            RemovalMode::None => {
                save_mask(&object, vdir.join("semantic_post.png"))?;
                Some(PathBuf::from(format!("views/{view_id}/semantic_post.png")))
            }
            RemovalMode::Perfect => None,
            RemovalMode::Residual { .. } => {
                save_mask(&residual_mask, vdir.join("semantic_post.png"))?;
                Some(PathBuf::from(format!("views/{view_id}/semantic_post.png")))
            }
        };

        let sam_pre = vdir.join("sam_pre");
        let sam_post = vdir.join("sam_post");
        std::fs::create_dir_all(&sam_pre).map_err(|e| Error::io_at(&sam_pre, e))?;
        std::fs::create_dir_all(&sam_post).map_err(|e| Error::io_at(&sam_post, e))?;
        save_mask(&object, sam_pre.join("000.png"))?;
        for (i, tile) in tiles.iter().enumerate() {
            save_mask(tile, sam_pre.join(format!("{:03}.png", i + 1)))?;
            save_mask(tile, sam_post.join(format!("{:03}.png", i + 1)))?;
        }
        match spec.removal {
            RemovalMode::None => {
                save_mask(&object, sam_post.join("000.png"))?;
            }
            RemovalMode::Perfect => {
                // The region behind the object becomes one big background
                // segment; its IoU with the object is well below the filter.
                save_mask(&object.complement(), sam_post.join("000.png"))?;
            }
            RemovalMode::Residual { .. } => {
                save_mask(&residual_mask, sam_post.join("000.png"))?;
            }
        }

        let depth_pre = depth_for(spec, &object, None);
        let depth_post = depth_for(spec, &object, Some(&residual_mask));
        save_depth(&depth_pre, vdir.join("depth_pre.pfm"))?;
        save_depth(&depth_post, vdir.join("depth_post.pfm"))?;

        views.push(ViewEntry {
            view_id: view_id.clone(),
            semantic_pre: PathBuf::from(format!("views/{view_id}/semantic_pre.png")),
            semantic_post,
            sam_pre_dir: PathBuf::from(format!("views/{view_id}/sam_pre")),
            sam_post_dir: PathBuf::from(format!("views/{view_id}/sam_post")),
            depth_pre: PathBuf::from(format!("views/{view_id}/depth_pre.pfm")),
            depth_post: PathBuf::from(format!("views/{view_id}/depth_post.pfm")),
            object_mask: PathBuf::from("object.png"),
        });
    }

    let mut expectation = expected_metrics(area, residual_px, spec.removal);
    let (ply, removal_set, refine_config) = match &spec.gaussians {
        Some(g) => {
            let paths = generate_cloud(spec, g, rho, out, &mut expectation)?;
            (Some(paths.0), Some(paths.1), Some(paths.2))
        }
        None => (None, None, None),
    };

    let manifest = SceneManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scene_id: "fixture".into(),
        object_id: format!("rect{}x{}", ow, oh),
        method_id: match spec.removal {
            RemovalMode::None => "none".into(),
            RemovalMode::Perfect => "perfect".into(),
            RemovalMode::Residual { rho } => format!("residual{rho}"),
        },
        views,
        ply,
        removal_set,
        refine_config,
    };
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io_at(&manifest_path, e))?;
    let expected_path = out.join("expected.json");
    std::fs::write(&expected_path, serde_json::to_string_pretty(&expectation)?)
        .map_err(|e| Error::io_at(&expected_path, e))?;
    Ok(expectation)
}

/// Depth raster: object pixels sit at the object depth; with a residual mask
/// given, the removed part of the object is opened up to the background.
fn depth_for(spec: &FixtureSpec, object: &BinaryMask, residual: Option<&BinaryMask>) -> DepthMap {
    let mut values = vec![spec.depth_background; (spec.width * spec.height) as usize];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let on_object = object.get(x, y);
            let still_there = match residual {
                None => on_object,
                Some(r) => r.get(x, y),
            };
            if on_object && still_there {
                values[(y * spec.width + x) as usize] = spec.depth_object;
            }
        }
    }
    DepthMap::new(spec.width, spec.height, values).expect("fixture depth is valid")
}

/// 4x4 background tiles with zero object overlap, scanned row-major.
fn background_tiles(spec: &FixtureSpec, object: &BinaryMask) -> Result<Vec<BinaryMask>> {
    const TILE: u32 = 4;
    let mut tiles = Vec::new();
    let mut y = 0;
    'scan: while y + TILE <= spec.height {
        let mut x = 0;
        while x + TILE <= spec.width {
            let mut clear = true;
            'check: for ty in y..y + TILE {
                for tx in x..x + TILE {
                    if object.get(tx, ty) {
                        clear = false;
                        break 'check;
                    }
                }
            }
            if clear {
                tiles.push(BinaryMask::from_fn(spec.width, spec.height, |px, py| {
                    px >= x && px < x + TILE && py >= y && py < y + TILE
                })?);
                if tiles.len() as u32 == spec.sam_background_tiles {
                    break 'scan;
                }
                x += TILE + 2;
            } else {
                x += TILE;
            }
        }
        y += TILE + 2;
    }
    if (tiles.len() as u32) < spec.sam_background_tiles {
        return Err(Error::FixtureSpec(format!(
            "no room for {} background tiles next to the object",
            spec.sam_background_tiles
        )));
    }
    Ok(tiles)
}

fn expected_metrics(area: usize, residual_px: usize, mode: RemovalMode) -> FixtureExpectation {
    let iou_post = residual_px as f64 / area as f64;
    let acc_depth = (area - residual_px) as f64 / area as f64;
    // The only post-removal mask overlapping the object is the residual; it
    // passes the filter only at sufficient overlap.
    let sim_sam = match mode {
        RemovalMode::None => 1.0,
        _ => {
            if iou_post >= DEFAULT_OVERLAP_TAU {
                iou_post
            } else {
                0.0
            }
        }
    };
    FixtureExpectation {
        iou_pre: 1.0,
        iou_post,
        iou_drop: 1.0 - iou_post,
        sim_sam,
        acc_depth,
        seed_splats: Vec::new(),
        residual_splats: Vec::new(),
        bridge_splats: Vec::new(),
        far_splats: Vec::new(),
    }
}

/// Two-cluster "dumbbell" cloud: a tight object cluster (the seed covers all
/// but the residual fraction), bridge background splats touching the object
/// boundary with distinct features, and far background splats outside any
/// candidate radius.
fn generate_cloud(
    spec: &FixtureSpec,
    g: &GaussianFixtureSpec,
    rho: f64,
    out: &Path,
    expectation: &mut FixtureExpectation,
) -> Result<(PathBuf, PathBuf, PathBuf)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = g.object_count + g.bridge_count + g.far_count;
    let mut positions = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * g.feature_dim);

    let object_feature = |features: &mut Vec<f32>| {
        features.push(1.0);
        features.extend(std::iter::repeat_n(0.0, g.feature_dim - 1));
    };
    let background_feature = |features: &mut Vec<f32>| {
        features.extend(std::iter::repeat_n(0.0, g.feature_dim));
    };

    for _ in 0..g.object_count {
        positions.push([
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ]);
        object_feature(&mut features);
    }
    for k in 0..g.bridge_count {
        let angle = 2.0 * std::f32::consts::PI * k as f32 / g.bridge_count.max(1) as f32;
        positions.push([
            0.9 * angle.cos(),
            0.9 * angle.sin(),
            rng.gen_range(-0.1..0.1),
        ]);
        background_feature(&mut features);
    }
    for _ in 0..g.far_count {
        positions.push([
            10.0 + rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ]);
        background_feature(&mut features);
    }

    let log_scale = |s: f32| s.ln();
    let mut log_scales = vec![[log_scale(0.3); 3]; g.object_count + g.bridge_count];
    log_scales.extend(vec![[log_scale(0.05); 3]; g.far_count]);

    let cloud = GaussianCloud::from_parts(
        positions,
        log_scales,
        vec![[1.0, 0.0, 0.0, 0.0]; n],
        vec![0.0; n],
        vec![0.5; n * 3],
        3,
        Some(Features {
            dim: g.feature_dim,
            data: features,
        }),
    )?;

    let residual_splats = (rho * g.object_count as f64).round() as usize;
    let seed_count = g.object_count - residual_splats;
    if seed_count == 0 {
        return Err(Error::FixtureSpec(
            "residual fraction leaves no seed splats; refinement needs a nonempty seed".into(),
        ));
    }
    let seed_indices: Vec<usize> = (0..seed_count).collect();
    let seed = RemovalSet::from_indices(n, &seed_indices, "fixture")?;

    // Self-check the planted structure: every object splat must be a
    // refinement candidate, no far splat may be.
    let candidates = candidate_filter(&cloud, &seed)?;
    for i in 0..g.object_count {
        if !candidates.contains(&i) {
            return Err(Error::FixtureSpec(format!(
                "object splat {i} is not connected to the seed; lower the seed or densify"
            )));
        }
    }
    let far_start = g.object_count + g.bridge_count;
    if candidates.iter().any(|&c| c >= far_start) {
        return Err(Error::FixtureSpec(
            "far background splats leaked into the candidate set".into(),
        ));
    }

    let ply_path = out.join("scene.ply");
    save_ply(&cloud, None, &ply_path)?;
    let removal_path = out.join("removal.txt");
    save_removal_indices(&seed, &removal_path)?;
    let refine_path = out.join("refine.json");
    std::fs::write(
        &refine_path,
        serde_json::to_string_pretty(&RefineConfig::default())?,
    )
    .map_err(|e| Error::io_at(&refine_path, e))?;

    expectation.seed_splats = seed_indices;
    expectation.residual_splats = (seed_count..g.object_count).collect();
    expectation.bridge_splats = (g.object_count..far_start).collect();
    expectation.far_splats = (far_start..n).collect();
    Ok((
        PathBuf::from("scene.ply"),
        PathBuf::from("removal.txt"),
        PathBuf::from("refine.json"),
    ))
}
