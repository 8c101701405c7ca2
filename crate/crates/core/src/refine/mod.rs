//! Graph-based removal refinement.
//!
//! Starting from a method's removal set, builds a graph over the splats that
//! spatially intersect it (nodes), connects spatial K-nearest neighbors whose
//! semantic features are similar enough (edges), and relaxes the removal
//! labels by minimizing a convex energy: a smoothed-KL data term anchoring
//! each node to its seed label plus an edge-weighted total-variation term
//! that rewards label agreement between semantically similar neighbors. The
//! relaxed removal probabilities are then cut at a high percentile and merged
//! with the seed set, so residual splats that cohere with the removed object
//! get swept in.

mod solver;

pub use solver::{energy, solve, SolveOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{candidate_filter, GaussianCloud, RemovalSet};
use crate::spatial::KdTree;

/// Refinement parameters. Serialized as the refine JSON config.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefineConfig {
    /// Spatial nearest-neighbor count per node.
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// Feature-similarity gate: an edge needs similarity >= delta.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Removal-probability percentile above which nodes are cut.
    #[serde(default = "default_percentile")]
    pub cut_percentile: f64,
    /// Scale applied to every edge weight.
    #[serde(default = "default_tv_weight")]
    pub tv_weight: f64,
    /// Label-smoothing epsilon of the KL data term.
    #[serde(default = "default_kl_smoothing")]
    pub kl_smoothing: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative energy-improvement tolerance for convergence.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_k() -> usize {
    10
}
fn default_delta() -> f64 {
    0.8
}
fn default_percentile() -> f64 {
    95.0
}
fn default_tv_weight() -> f64 {
    1.0
}
fn default_kl_smoothing() -> f64 {
    1e-2
}
fn default_max_iters() -> usize {
    4000
}
fn default_tol() -> f64 {
    1e-9
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            k_neighbors: default_k(),
            delta: default_delta(),
            cut_percentile: default_percentile(),
            tv_weight: default_tv_weight(),
            kl_smoothing: default_kl_smoothing(),
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::InvalidInput("k_neighbors must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.delta) || self.delta.is_nan() {
            return Err(Error::InvalidInput(format!(
                "delta must lie in [0,1], got {}",
                self.delta
            )));
        }
        if !(self.cut_percentile > 0.0 && self.cut_percentile < 100.0) {
            return Err(Error::InvalidInput(format!(
                "cut_percentile must lie in (0,100), got {}",
                self.cut_percentile
            )));
        }
        if !(self.tv_weight > 0.0 && self.tv_weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tv_weight must be positive, got {}",
                self.tv_weight
            )));
        }
        if !(self.kl_smoothing > 0.0 && self.kl_smoothing < 0.5) {
            return Err(Error::InvalidInput(format!(
                "kl_smoothing must lie in (0, 0.5), got {}",
                self.kl_smoothing
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// An undirected edge between node positions `u < v` with positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// The refinement graph over candidate splats.
#[derive(Debug, Clone)]
pub struct RefinementGraph {
    /// Cloud indices of the nodes, ascending.
    pub node_indices: Vec<usize>,
    /// Undirected edges, each stored once with `u < v`, sorted.
    pub edges: Vec<GraphEdge>,
    /// Seed label per node: true when the splat is in the seed removal set.
    pub unary_init: Vec<bool>,
}

impl RefinementGraph {
    pub fn node_count(&self) -> usize {
        self.node_indices.len()
    }
}

/// Similarity in (0, 1]: `1 / (1 + ||a - b||_2)`. Exactly 1 iff the features
/// are identical.
pub fn feature_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    Ok(1.0 / (1.0 + feature_distance(a, b)?))
}

/// Euclidean distance between two feature vectors.
pub fn feature_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len(), "feature vectors"));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// Builds the refinement graph: nodes are the candidate splats, and each node
/// draws edges to its K nearest candidates whose feature similarity passes
/// the delta gate. Edges are symmetrized (kept if either endpoint selected
/// them) and weighted `tv_weight * exp(-||f_u - f_v||_2)`.
pub fn build_graph(
    cloud: &GaussianCloud,
    seed: &RemovalSet,
    cfg: &RefineConfig,
) -> Result<RefinementGraph> {
    cfg.validate()?;
    if cloud.features().is_none() {
        return Err(Error::MissingFeatures);
    }
    let node_indices = candidate_filter(cloud, seed)?;
    if node_indices.is_empty() {
        return Err(Error::GraphEmpty("no candidate splats".into()));
    }

    let points: Vec<[f64; 3]> = node_indices
        .iter()
        .map(|&i| cloud.position_f64(i))
        .collect();
    let tree = KdTree::build(points.clone());

    let mut edge_set = std::collections::BTreeSet::new();
    for a in 0..node_indices.len() {
        for (b, _) in tree.knn(points[a], cfg.k_neighbors, Some(a)) {
            let fa = cloud.feature(node_indices[a]).expect("features checked");
            let fb = cloud.feature(node_indices[b]).expect("features checked");
            if feature_similarity(fa, fb)? >= cfg.delta {
                edge_set.insert((a.min(b), a.max(b)));
            }
        }
    }

    let mut edges = Vec::with_capacity(edge_set.len());
    for (u, v) in edge_set {
        let fu = cloud.feature(node_indices[u]).expect("features checked");
        let fv = cloud.feature(node_indices[v]).expect("features checked");
        let weight = cfg.tv_weight * (-feature_distance(fu, fv)?).exp();
        edges.push(GraphEdge { u, v, weight });
    }
    if edges.is_empty() {
        return Err(Error::GraphEmpty(
            "no edges survived the feature-similarity gate".into(),
        ));
    }

    let unary_init = node_indices.iter().map(|&i| seed.flags[i]).collect();
    Ok(RefinementGraph {
        node_indices,
        edges,
        unary_init,
    })
}

/// Thresholds removal probabilities at the configured percentile: the top
/// `100 - percentile` percent of nodes (by probability, ceiling-rounded,
/// ties included) are marked removed irrespective of their seed labels, and
/// the result is merged with the seed set.
pub fn cut(
    probabilities: &[f64],
    node_indices: &[usize],
    seed: &RemovalSet,
    percentile: f64,
) -> Result<RemovalSet> {
    if probabilities.is_empty() {
        return Err(Error::EmptyInput("removal probabilities".into()));
    }
    if probabilities.len() != node_indices.len() {
        return Err(Error::InvalidInput(format!(
            "{} probabilities for {} nodes",
            probabilities.len(),
            node_indices.len()
        )));
    }
    let n = probabilities.len();
    // Number of nodes above the percentile, at least one. Computed as
    // (100 - P) * n / 100 with a tiny downward nudge so exact shares like
    // 5% of 100 do not ceil one past the intended count.
    let m = (((100.0 - percentile) * n as f64) / 100.0 - 1e-9).ceil().max(1.0) as usize;
    let m = m.min(n);
    let mut sorted = probabilities.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let threshold = sorted[n - m];

    let cut_indices: Vec<usize> = (0..n)
        .filter(|&i| probabilities[i] >= threshold)
        .map(|i| node_indices[i])
        .collect();
    let cut_set = RemovalSet::from_indices(seed.len(), &cut_indices, "cut")?;
    seed.union(&cut_set, "refined")
}

/// Solver/refinement termination state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementStatus {
    Converged,
    MaxIters,
    GraphEmpty,
}

/// Outcome of a refinement run.
#[derive(Debug, Clone)]
pub struct RefinementResult {
    /// Cloud indices of the graph nodes (empty on graph-empty failure).
    pub node_indices: Vec<usize>,
    /// Per-node removal probability, aligned with `node_indices`.
    pub probabilities: Vec<f64>,
    /// Seed united with the percentile cut; equals the seed on failure.
    pub refined_set: RemovalSet,
    /// Best objective value after each iteration; non-increasing.
    pub energy_trace: Vec<f64>,
    pub status: RefinementStatus,
}

/// Full refinement: build the graph, relax the labels, cut, and merge.
///
/// A graph that cannot be built (empty seed, no candidates, or no edges) is
/// the documented failure mode: the result carries `GraphEmpty` status and
/// the seed set unchanged.
pub fn refine(cloud: &GaussianCloud, seed: &RemovalSet, cfg: &RefineConfig) -> Result<RefinementResult> {
    cfg.validate()?;
    if cloud.features().is_none() {
        return Err(Error::MissingFeatures);
    }
    if seed.len() != cloud.len() {
        return Err(Error::InvalidInput(format!(
            "seed removal set covers {} splats, cloud has {}",
            seed.len(),
            cloud.len()
        )));
    }

    let graph = match build_graph(cloud, seed, cfg) {
        Ok(g) => g,
        Err(Error::GraphEmpty(_)) => {
            return Ok(RefinementResult {
                node_indices: Vec::new(),
                probabilities: Vec::new(),
                refined_set: seed.clone(),
                energy_trace: Vec::new(),
                status: RefinementStatus::GraphEmpty,
            })
        }
        Err(e) => return Err(e),
    };

    let outcome = solve(&graph, cfg)?;
    let refined_set = cut(
        &outcome.probabilities,
        &graph.node_indices,
        seed,
        cfg.cut_percentile,
    )?;
    Ok(RefinementResult {
        node_indices: graph.node_indices,
        probabilities: outcome.probabilities,
        refined_set,
        energy_trace: outcome.trace,
        status: outcome.status,
    })
}
