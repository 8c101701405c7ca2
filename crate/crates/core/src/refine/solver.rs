//! Convex relaxation solver for the refinement energy.
//!
//! Objective over per-node label vectors x_v = (retain, remove) on the
//! 2-simplex:
//!
//!   F(x) = sum_v KL(q_v || x_v + eps)  +  sum_(u,v) w_uv * sum_d |x_ud - x_vd|
//!
//! with q_v the seed label smoothed to (1-eps, eps) or (eps, 1-eps). Both
//! terms are convex; the total-variation term makes strongly connected
//! regions settle on a common value (a plateau), which is what lets a
//! percentile cut pick up whole coherent regions at once.
//!
//! Minimization runs in two stages. The binary restriction of F is a
//! submodular pairwise labeling problem, so an s-t min-cut first pins the
//! exact optimal binary partition. A primal-dual proximal iteration
//! (Chambolle-Pock style: dual clamp on edge differences, exact 1-D prox of
//! the KL term per node, over-relaxation) then minimizes F over the simplex
//! restricted to that partition's rounding region, yielding calibrated
//! probabilities whose 0.5-rounding is exactly the optimal partition.
//! Primal-dual iterates are not individually monotone, so the solver tracks
//! the best iterate; the reported trace is the best-so-far energy, which is
//! non-increasing by construction. Everything runs in a fixed order with no
//! randomness, so results are bitwise reproducible.

use crate::error::{Error, Result};
use crate::refine::{RefineConfig, RefinementGraph, RefinementStatus};

/// Values this close across an edge are fused to the exact same value after
/// solving, so percentile thresholds treat converged plateaus atomically.
const PLATEAU_TOL: f64 = 1e-6;

/// Gap kept between retained-side probabilities and the 0.5 rounding
/// boundary; must stay well above `PLATEAU_TOL` so fusion never bridges the
/// two sides of the cut.
const ROUND_MARGIN: f64 = 1e-3;

/// Minimum iterations before the convergence test may fire.
const MIN_ITERS: usize = 100;

/// Consecutive non-improving iterations required to declare convergence.
const PATIENCE: usize = 50;

/// Floor for KL denominators, guarding user-set tiny smoothing values.
const KL_DENOM_FLOOR: f64 = 1e-8;

/// Evaluates the refinement energy at simplex-feasible labels.
///
/// Labels further than `cfg.tol` off the simplex are rejected (the indicator
/// term of the objective).
pub fn energy(graph: &RefinementGraph, x: &[[f64; 2]], cfg: &RefineConfig) -> Result<f64> {
    if x.len() != graph.node_count() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} nodes",
            x.len(),
            graph.node_count()
        )));
    }
    for (v, xv) in x.iter().enumerate() {
        let sum = xv[0] + xv[1];
        if !xv.iter().all(|c| c.is_finite())
            || xv.iter().any(|c| *c < -cfg.tol)
            || (sum - 1.0).abs() > cfg.tol.max(1e-12)
        {
            return Err(Error::SimplexViolation {
                node: v,
                detail: format!("label {xv:?} (component sum {sum})"),
            });
        }
    }

    let eps = cfg.kl_smoothing;
    let mut total = 0.0;
    for (v, xv) in x.iter().enumerate() {
        let q = smoothed_init(graph.unary_init[v], eps);
        for d in 0..2 {
            let denom = (xv[d] + eps).max(KL_DENOM_FLOOR);
            total += q[d] * (q[d] / denom).ln();
        }
    }
    for e in &graph.edges {
        total += e.weight * ((x[e.u][0] - x[e.v][0]).abs() + (x[e.u][1] - x[e.v][1]).abs());
    }
    Ok(total)
}

fn smoothed_init(removed: bool, eps: f64) -> [f64; 2] {
    if removed {
        [eps, 1.0 - eps]
    } else {
        [1.0 - eps, eps]
    }
}

fn labels_from_probabilities(p: &[f64]) -> Vec<[f64; 2]> {
    p.iter().map(|&pv| [1.0 - pv, pv]).collect()
}

/// Solver output: removal probabilities (the `remove` simplex coordinate per
/// node), the best-energy trace, and how the iteration stopped.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub probabilities: Vec<f64>,
    pub trace: Vec<f64>,
    pub status: RefinementStatus,
}

/// Minimizes the refinement energy, returning per-node removal probabilities
/// with a non-increasing energy trace. The 0.5-rounding of the result is the
/// exact optimal binary partition of the same energy.
pub fn solve(graph: &RefinementGraph, cfg: &RefineConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::GraphEmpty("solver given a graph without nodes".into()));
    }
    let eps = cfg.kl_smoothing;
    let q: Vec<[f64; 2]> = graph
        .unary_init
        .iter()
        .map(|&r| smoothed_init(r, eps))
        .collect();

    let partition = optimal_binary_partition(graph, cfg);
    let bounds: Vec<(f64, f64)> = partition
        .iter()
        .map(|&removed| {
            if removed {
                (0.5, 1.0)
            } else {
                (0.0, 0.5 - ROUND_MARGIN)
            }
        })
        .collect();

    // Warm start: smoothed seed labels clamped into the partition's box.
    let mut p: Vec<f64> = (0..n)
        .map(|v| q[v][1].clamp(bounds[v].0, bounds[v].1))
        .collect();

    // Separable case: each node independently minimizes its KL term over its
    // box; the closed-form stationary point is q1 + eps (q1 - q0), clamped.
    if graph.edges.is_empty() {
        let e0 = energy(graph, &labels_from_probabilities(&p), cfg)?;
        let opt: Vec<f64> = (0..n)
            .map(|v| (q[v][1] + eps * (q[v][1] - q[v][0])).clamp(bounds[v].0, bounds[v].1))
            .collect();
        let e1 = energy(graph, &labels_from_probabilities(&opt), cfg)?;
        return Ok(if e1 <= e0 {
            SolveOutcome {
                probabilities: opt,
                trace: vec![e0, e1],
                status: RefinementStatus::Converged,
            }
        } else {
            SolveOutcome {
                probabilities: p,
                trace: vec![e0],
                status: RefinementStatus::Converged,
            }
        });
    }

    let mut degree = vec![0usize; n];
    for e in &graph.edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    let max_deg = degree.iter().copied().max().unwrap_or(1).max(1);
    // Step sizes satisfying tau * sigma * ||D||^2 < 1 with ||D||^2 <= 2 max_deg.
    let op_norm = (2.0 * max_deg as f64).sqrt();
    let tau = 0.99 / op_norm;
    let sigma = 0.99 / op_norm;

    let mut p_bar = p.clone();
    let mut y = vec![0.0f64; graph.edges.len()];

    let mut best_p = p.clone();
    let mut best_e = energy(graph, &labels_from_probabilities(&p), cfg)?;
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(best_e);

    let mut stall = 0usize;
    let mut status = RefinementStatus::MaxIters;

    let mut grad = vec![0.0f64; n];
    for iter in 1..=cfg.max_iters {
        // Dual: ascent on edge differences, clamped to the TV box. The box
        // radius is 2w because both simplex coordinates move in lockstep.
        for (e, ye) in graph.edges.iter().zip(y.iter_mut()) {
            let c = 2.0 * e.weight;
            *ye = (*ye + sigma * (p_bar[e.u] - p_bar[e.v])).clamp(-c, c);
        }

        // Primal: prox of the KL term at p - tau * D^T y, inside the box.
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (e, ye) in graph.edges.iter().zip(&y) {
            grad[e.u] += ye;
            grad[e.v] -= ye;
        }
        for v in 0..n {
            let z = p[v] - tau * grad[v];
            let p_new = prox_kl(q[v], eps, z, tau, bounds[v]);
            p_bar[v] = 2.0 * p_new - p[v];
            p[v] = p_new;
        }

        let e_now = energy(graph, &labels_from_probabilities(&p), cfg)?;
        if !e_now.is_finite() {
            return Err(Error::NumericalFailure {
                iteration: iter,
                detail: format!("energy became {e_now}"),
            });
        }
        let improved = best_e - e_now;
        if e_now < best_e {
            best_e = e_now;
            best_p.copy_from_slice(&p);
        }
        trace.push(best_e);

        if improved > cfg.tol * best_e.abs().max(1.0) {
            stall = 0;
        } else {
            stall += 1;
            if iter >= MIN_ITERS && stall >= PATIENCE {
                status = RefinementStatus::Converged;
                break;
            }
        }
    }

    fuse_plateaus(graph, &mut best_p);
    Ok(SolveOutcome {
        probabilities: best_p,
        trace,
        status,
    })
}

/// Exact minimizer of  -q0 ln(1-p+eps) - q1 ln(p+eps) + (p-z)^2 / (2 tau)
/// over `p` in `[lo, hi]`. The derivative is strictly increasing, so a sign
/// check at the ends plus bisection pins the root deterministically.
fn prox_kl(q: [f64; 2], eps: f64, z: f64, tau: f64, (lo, hi): (f64, f64)) -> f64 {
    let dphi = |p: f64| q[0] / (1.0 - p + eps) - q[1] / (p + eps) + (p - z) / tau;
    if dphi(lo) >= 0.0 {
        return lo;
    }
    if dphi(hi) <= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if dphi(mid) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Exact optimal binary labeling of the refinement energy.
///
/// On binary labels the pairwise term costs `2w` per disagreeing edge, which
/// is submodular, so the minimizer is an s-t min-cut: source side = removed.
/// Unaries are offset to non-negative capacities; the offset shifts the
/// energy by a constant and leaves the argmin untouched.
fn optimal_binary_partition(graph: &RefinementGraph, cfg: &RefineConfig) -> Vec<bool> {
    let n = graph.node_count();
    let eps = cfg.kl_smoothing;
    let kl_at = |q: [f64; 2], x: [f64; 2]| -> f64 {
        (0..2)
            .map(|d| {
                let denom = (x[d] + eps).max(KL_DENOM_FLOOR);
                q[d] * (q[d] / denom).ln()
            })
            .sum()
    };

    let mut flow = Dinic::new(n + 2);
    let source = n;
    let sink = n + 1;
    for v in 0..n {
        let q = smoothed_init(graph.unary_init[v], eps);
        let cost_retained = kl_at(q, [1.0, 0.0]);
        let cost_removed = kl_at(q, [0.0, 1.0]);
        let base = cost_retained.min(cost_removed);
        // A sink-side node cuts s->v and pays the retained cost; a
        // source-side node cuts v->t and pays the removed cost. Source side
        // is therefore "removed".
        flow.add_edge(source, v, cost_retained - base);
        flow.add_edge(v, sink, cost_removed - base);
    }
    for e in &graph.edges {
        flow.add_edge(e.u, e.v, 2.0 * e.weight);
        flow.add_edge(e.v, e.u, 2.0 * e.weight);
    }
    flow.max_flow(source, sink);
    // The min-cut source side is the residual-reachable set.
    let reachable = flow.reachable_from(source);
    (0..n).map(|v| reachable[v]).collect()
}

/// Dinic max-flow on f64 capacities. Deterministic: adjacency order is
/// insertion order, BFS/DFS scan in that order.
struct Dinic {
    // (to, capacity, reverse edge index)
    edges: Vec<(usize, f64, usize)>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

const FLOW_EPS: f64 = 1e-12;

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
            level: vec![0; n],
            iter: vec![0; n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        let e = self.edges.len();
        self.edges.push((to, cap.max(0.0), e + 1));
        self.edges.push((from, 0.0, e));
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut queue = std::collections::VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &ei in &self.adj[u] {
                let (to, cap, _) = self.edges[ei];
                if cap > FLOW_EPS && self.level[to] < 0 {
                    self.level[to] = self.level[u] + 1;
                    queue.push_back(to);
                }
            }
        }
        self.level[t] >= 0
    }

    /// One augmenting path in the current level graph, found iteratively
    /// (paths can be as long as the node count, too deep for recursion).
    fn augment(&mut self, s: usize, t: usize) -> f64 {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let mut pushed = f64::INFINITY;
                for &ei in &path {
                    pushed = pushed.min(self.edges[ei].1);
                }
                for &ei in &path {
                    let rev = self.edges[ei].2;
                    self.edges[ei].1 -= pushed;
                    self.edges[rev].1 += pushed;
                }
                return pushed;
            }
            if self.iter[u] < self.adj[u].len() {
                let ei = self.adj[u][self.iter[u]];
                let (to, cap, _) = self.edges[ei];
                if cap > FLOW_EPS && self.level[to] == self.level[u] + 1 {
                    path.push(ei);
                    u = to;
                } else {
                    self.iter[u] += 1;
                }
            } else {
                if u == s {
                    return 0.0;
                }
                // Dead end: prune the node for this phase and retreat.
                self.level[u] = -1;
                let ei = path.pop().expect("non-source node was reached via an edge");
                u = self.edges[self.edges[ei].2].0;
                self.iter[u] += 1;
            }
        }
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.augment(s, t);
                if f <= FLOW_EPS {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    fn reachable_from(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &ei in &self.adj[u] {
                let (to, cap, _) = self.edges[ei];
                if cap > FLOW_EPS && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    }
}

/// Snaps edge-connected nodes whose values agree within `PLATEAU_TOL` to a
/// single shared value (their mean in node order), mirroring the
/// constant-component structure of the exact TV minimizer.
fn fuse_plateaus(graph: &RefinementGraph, p: &mut [f64]) {
    let n = p.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for e in &graph.edges {
        if (p[e.u] - p[e.v]).abs() <= PLATEAU_TOL {
            let (ru, rv) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
    }
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for (i, &value) in p.iter().enumerate() {
        let r = find(&mut parent, i);
        sums[r] += value;
        counts[r] += 1;
    }
    for (i, value) in p.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        *value = sums[r] / counts[r] as f64;
    }
}
