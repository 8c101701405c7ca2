//! Batch evaluation over scene manifests.
//!
//! A manifest lists, per rendered view, the files needed by the three
//! metrics: semantic masks before/after removal, "anything" mask-set
//! directories before/after, depth maps before/after, and the pseudo-ground-
//! truth object mask. Views are evaluated independently (optionally in
//! parallel) and per-view problems degrade to flagged rows instead of
//! aborting the batch; a missing post-removal semantic mask is not a problem
//! at all but the convention for "the segmenter no longer finds the object"
//! and scores an IoU of 0.

mod fixture;
mod report;

pub use fixture::{gen_fixture, FixtureExpectation, FixtureSpec, GaussianFixtureSpec, RemovalMode};
pub use report::{emit_report, merge_summary_csv, read_report, write_atomic, ReportFormat};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::depth_change::{acc_depth, depth_diff, ght_threshold};
use crate::error::{Error, Result};
use crate::ght::GhtConfig;
use crate::mask_sim::{sim_sam, SimSamConfig};
use crate::raster::{iou, load_depth, load_mask, load_mask_set, BinaryMask};
use crate::semantic::{
    acc_post_ratio, summarize_scene, SemanticSceneSummary, SemanticViewRecord,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable bounding the evaluation worker pool.
pub const WORKERS_ENV: &str = "SPLATEVAL_WORKERS";

/// Per-view input paths, relative to the manifest file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewEntry {
    pub view_id: String,
    pub semantic_pre: PathBuf,
    /// Absent (or pointing at a missing file) when the segmenter produced no
    /// post-removal mask; the view then scores `iou_post = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_post: Option<PathBuf>,
    pub sam_pre_dir: PathBuf,
    pub sam_post_dir: PathBuf,
    pub depth_pre: PathBuf,
    pub depth_post: PathBuf,
    pub object_mask: PathBuf,
}

/// A scene/object/method evaluation unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub scene_id: String,
    pub object_id: String,
    pub method_id: String,
    pub views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ply: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal_set: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_config: Option<PathBuf>,
}

fn default_schema_version() -> u32 {
    MANIFEST_SCHEMA_VERSION
}

/// A missing or inconsistent file noted during validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewIssue {
    pub view_id: String,
    pub path: PathBuf,
    pub reason: String,
}

/// Parses a manifest and checks that every referenced file exists.
///
/// Returns the manifest together with per-view issues. An absent
/// `semantic_post` entry is legitimate (the IoU-0 convention) and not an
/// issue, but a named-yet-missing file is reported. Errors out when no view
/// is usable at all.
pub fn validate_manifest(path: impl AsRef<Path>) -> Result<(SceneManifest, Vec<ViewIssue>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let manifest: SceneManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported manifest schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.views.is_empty() {
        return Err(Error::Manifest("manifest has no views".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for v in &manifest.views {
        if !seen.insert(v.view_id.clone()) {
            return Err(Error::Manifest(format!(
                "duplicate view id `{}`",
                v.view_id
            )));
        }
    }

    let base = manifest_dir(path);
    let mut issues = Vec::new();
    let mut usable = 0usize;
    for view in &manifest.views {
        let mut view_ok = true;
        let check = |p: &PathBuf, what: &str, issues: &mut Vec<ViewIssue>| -> bool {
            let full = base.join(p);
            let ok = full.exists();
            if !ok {
                issues.push(ViewIssue {
                    view_id: view.view_id.clone(),
                    path: p.clone(),
                    reason: format!("{what} file missing"),
                });
            }
            ok
        };
        // The object mask is the reference every metric needs.
        view_ok &= check(&view.object_mask, "object mask", &mut issues);
        check(&view.semantic_pre, "pre-removal semantic mask", &mut issues);
        if let Some(post) = &view.semantic_post {
            check(post, "post-removal semantic mask", &mut issues);
        }
        check(&view.sam_pre_dir, "pre-removal mask-set directory", &mut issues);
        check(&view.sam_post_dir, "post-removal mask-set directory", &mut issues);
        check(&view.depth_pre, "pre-removal depth", &mut issues);
        check(&view.depth_post, "post-removal depth", &mut issues);
        if view_ok {
            usable += 1;
        }
    }
    if usable == 0 {
        return Err(Error::Manifest(
            "no usable views: every view is missing its object mask".into(),
        ));
    }
    Ok((manifest, issues))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Evaluation configuration; every module default is overridable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Recognition thresholds for acc rates; default {0.5, 0.7, 0.9}.
    #[serde(default = "default_thresholds")]
    pub acc_thresholds: Vec<f64>,
    #[serde(default)]
    pub sim_sam: SimSamConfig,
    #[serde(default)]
    pub ght: GhtConfig,
    /// Worker-pool bound; falls back to SPLATEVAL_WORKERS, then all cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// When set, writes a `<view_id>_depth_change.png` visualization of the
    /// thresholded depth difference per view into this directory (resolved
    /// relative to the manifest).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_mask_dir: Option<PathBuf>,
}

fn default_thresholds() -> Vec<f64> {
    crate::semantic::DEFAULT_THRESHOLDS.to_vec()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            acc_thresholds: default_thresholds(),
            sim_sam: SimSamConfig::default(),
            ght: GhtConfig::default(),
            workers: None,
            depth_mask_dir: None,
        }
    }
}

impl EvalConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let cfg: EvalConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.acc_thresholds.is_empty() {
            return Err(Error::InvalidInput("acc_thresholds must not be empty".into()));
        }
        for &t in &self.acc_thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "acc threshold must lie in (0,1], got {t}"
                )));
            }
        }
        self.ght.validate()
    }

    /// Stable hash of the configuration for report provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One evaluated view. Metrics that could not be computed are `None` with the
/// cause appended to `flags`; a view without its object mask is `skipped`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ViewRow {
    pub view_id: String,
    pub skipped: bool,
    pub iou_pre: Option<f64>,
    pub iou_post: Option<f64>,
    pub iou_drop: Option<f64>,
    pub detected_pre: bool,
    pub detected_post: bool,
    pub sim_sam: Option<f64>,
    /// True when no mask in either set overlapped the object.
    pub sim_no_overlap: bool,
    pub xi_depth: Option<f64>,
    pub xi_degenerate: bool,
    pub acc_depth: Option<f64>,
    pub flags: Vec<String>,
}

impl ViewRow {
    fn empty(view_id: String) -> Self {
        ViewRow {
            view_id,
            skipped: false,
            iou_pre: None,
            iou_post: None,
            iou_drop: None,
            detected_pre: false,
            detected_post: false,
            sim_sam: None,
            sim_no_overlap: false,
            xi_depth: None,
            xi_degenerate: false,
            acc_depth: None,
            flags: Vec::new(),
        }
    }

    /// True when some metric failed to compute (not counting the IoU-0
    /// convention for an absent post-removal semantic mask).
    pub fn has_failures(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Scene-level aggregates, recomputable from the rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneSummary {
    pub n_views: usize,
    pub skipped_views: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<SemanticSceneSummary>,
    /// Percentage of views still segmented above each threshold.
    pub acc_post_pct_at: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sim_sam: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_acc_depth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_xi_depth: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
}

/// The full evaluation artifact for one scene/object/method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub scene_id: String,
    pub object_id: String,
    pub method_id: String,
    pub rows: Vec<ViewRow>,
    pub summary: SceneSummary,
    pub provenance: Provenance,
}

/// Evaluates every view of a manifest and aggregates a scene summary.
///
/// Rows are sorted by view id, so the report is independent of manifest
/// order; per-view failures become flagged rows, never batch aborts.
pub fn run_eval(
    manifest: &SceneManifest,
    manifest_path: &Path,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    let base = manifest_dir(manifest_path);

    let workers = config.workers.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
    });
    let mut rows: Vec<ViewRow> = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?
            .install(|| {
                manifest
                    .views
                    .par_iter()
                    .map(|v| evaluate_view(v, &base, config))
                    .collect()
            }),
        None => manifest
            .views
            .par_iter()
            .map(|v| evaluate_view(v, &base, config))
            .collect(),
    };
    rows.sort_by(|a, b| a.view_id.cmp(&b.view_id));

    let summary = summarize_rows(&rows, &config.acc_thresholds)?;
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scene_id: manifest.scene_id.clone(),
        object_id: manifest.object_id.clone(),
        method_id: manifest.method_id.clone(),
        rows,
        summary,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
        },
    })
}

fn evaluate_view(view: &ViewEntry, base: &Path, config: &EvalConfig) -> ViewRow {
    let mut row = ViewRow::empty(view.view_id.clone());

    let object = match load_mask(base.join(&view.object_mask)) {
        Ok(m) => m,
        Err(e) => {
            row.skipped = true;
            row.flags.push(format!("object-mask: {e}"));
            return row;
        }
    };

    evaluate_semantic(view, base, &object, &mut row);
    evaluate_sim_sam(view, base, &object, config, &mut row);
    evaluate_depth(view, base, &object, config, &mut row);
    row
}

fn evaluate_semantic(view: &ViewEntry, base: &Path, object: &BinaryMask, row: &mut ViewRow) {
    let pre_path = base.join(&view.semantic_pre);
    match load_mask(&pre_path) {
        Ok(mask) => match iou(&mask, object) {
            Ok(v) => {
                row.iou_pre = Some(v);
                row.detected_pre = true;
            }
            Err(e) => row.flags.push(format!("semantic-pre: {e}")),
        },
        // No pre-removal mask produced: the segmenter never found the
        // object, IoU 0 by the same convention as post.
        Err(Error::IoAt { .. }) => {
            row.iou_pre = Some(0.0);
            row.detected_pre = false;
        }
        Err(e) => row.flags.push(format!("semantic-pre: {e}")),
    }

    match &view.semantic_post {
        None => {
            row.iou_post = Some(0.0);
            row.detected_post = false;
        }
        Some(post) => {
            let post_path = base.join(post);
            match load_mask(&post_path) {
                Ok(mask) => match iou(&mask, object) {
                    Ok(v) => {
                        row.iou_post = Some(v);
                        row.detected_post = true;
                    }
                    Err(e) => row.flags.push(format!("semantic-post: {e}")),
                },
                // Named but absent: the segmenter produced nothing, IoU 0.
                Err(Error::IoAt { .. }) => {
                    row.iou_post = Some(0.0);
                    row.detected_post = false;
                }
                Err(e) => row.flags.push(format!("semantic-post: {e}")),
            }
        }
    }

    if let (Some(pre), Some(post)) = (row.iou_pre, row.iou_post) {
        row.iou_drop = Some(pre - post);
    }
}

fn evaluate_sim_sam(
    view: &ViewEntry,
    base: &Path,
    object: &BinaryMask,
    config: &EvalConfig,
    row: &mut ViewRow,
) {
    let sets = load_mask_set(base.join(&view.sam_pre_dir))
        .and_then(|a| load_mask_set(base.join(&view.sam_post_dir)).map(|b| (a, b)));
    match sets {
        Ok((a, b)) => match sim_sam(&a, &b, object, &config.sim_sam) {
            Ok(score) => {
                row.sim_sam = Some(score.value);
                row.sim_no_overlap = score.no_overlap;
            }
            Err(e) => row.flags.push(format!("sim-sam: {e}")),
        },
        Err(e) => row.flags.push(format!("sim-sam: {e}")),
    }
}

fn evaluate_depth(
    view: &ViewEntry,
    base: &Path,
    object: &BinaryMask,
    config: &EvalConfig,
    row: &mut ViewRow,
) {
    let maps = load_depth(base.join(&view.depth_pre))
        .and_then(|pre| load_depth(base.join(&view.depth_post)).map(|post| (pre, post)));
    let (pre, post) = match maps {
        Ok(m) => m,
        Err(e) => {
            row.flags.push(format!("depth: {e}"));
            return;
        }
    };
    let outcome = depth_diff(&pre, &post).and_then(|diff| {
        let threshold = ght_threshold(&diff, &config.ght)?;
        let acc = acc_depth(&diff, object, threshold.value)?;
        Ok((diff, threshold, acc))
    });
    match outcome {
        Ok((diff, threshold, acc)) => {
            row.xi_depth = Some(threshold.value);
            row.xi_degenerate = threshold.degenerate;
            row.acc_depth = Some(acc);
            if let Some(dir) = &config.depth_mask_dir {
                let result = crate::depth_change::threshold_mask(&diff, threshold.value)
                    .and_then(|mask| {
                        let dir = base.join(dir);
                        std::fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
                        crate::raster::save_mask(
                            &mask,
                            dir.join(format!("{}_depth_change.png", view.view_id)),
                        )
                    });
                if let Err(e) = result {
                    row.flags.push(format!("depth-mask: {e}"));
                }
            }
        }
        Err(e) => row.flags.push(format!("depth: {e}")),
    }
}

/// Aggregates rows into the scene summary. Pure: re-running it on a report's
/// rows reproduces the report's summary exactly.
pub fn summarize_rows(rows: &[ViewRow], thresholds: &[f64]) -> Result<SceneSummary> {
    let usable: Vec<&ViewRow> = rows.iter().filter(|r| !r.skipped).collect();
    let skipped_views = rows.len() - usable.len();

    let records: Vec<SemanticViewRecord> = usable
        .iter()
        .filter_map(|r| match (r.iou_pre, r.iou_post) {
            (Some(pre), Some(post)) => SemanticViewRecord::new(
                r.view_id.clone(),
                pre,
                post,
                r.detected_pre,
                r.detected_post,
            )
            .ok(),
            _ => None,
        })
        .collect();

    let (semantic, acc_post_pct_at) = if records.is_empty() {
        (None, thresholds.iter().map(|&t| (t, 0.0)).collect())
    } else {
        let summary = summarize_scene(&records, thresholds)?;
        let mut acc_post = Vec::with_capacity(thresholds.len());
        for &t in thresholds {
            acc_post.push((t, 100.0 * acc_post_ratio(&records, t)?));
        }
        acc_post.sort_by(|a, b| a.0.total_cmp(&b.0));
        (Some(summary), acc_post)
    };

    let mean = |values: Vec<f64>| -> Option<f64> {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    Ok(SceneSummary {
        n_views: usable.len(),
        skipped_views,
        semantic,
        acc_post_pct_at,
        mean_sim_sam: mean(usable.iter().filter_map(|r| r.sim_sam).collect()),
        mean_acc_depth: mean(usable.iter().filter_map(|r| r.acc_depth).collect()),
        mean_xi_depth: mean(usable.iter().filter_map(|r| r.xi_depth).collect()),
    })
}
