//! Spatial search structures over 3D points: a uniform hash grid for
//! radius-bounded candidate queries and a kd-tree for exact k-nearest
//! neighbors.
//!
//! Both structures are exact relative to their brute-force counterparts:
//! distance comparisons are done in f64 and ties resolve by ascending point
//! index, so results are reproducible and match an O(n^2) scan bit-for-bit.

use std::collections::HashMap;

/// Uniform hash grid over a set of points, for "anything within radius r of
/// q" candidate enumeration. Cell size should be on the order of the largest
/// query radius for good pruning; correctness does not depend on it.
pub struct UniformGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl UniformGrid {
    pub fn build(points: &[[f64; 3]], indices: impl Iterator<Item = usize>, cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for i in indices {
            let key = Self::key(points[i], cell);
            cells.entry(key).or_default().push(i as u32);
        }
        UniformGrid { cell, cells }
    }

    fn key(p: [f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    /// Visits every stored index whose cell intersects the axis-aligned box
    /// around `q` with half-extent `radius`. Supersets the ball of that
    /// radius; callers apply their exact predicate.
    pub fn for_each_candidate(&self, q: [f64; 3], radius: f64, mut f: impl FnMut(usize)) {
        let lo = Self::key([q[0] - radius, q[1] - radius, q[2] - radius], self.cell);
        let hi = Self::key([q[0] + radius, q[1] + radius, q[2] + radius], self.cell);
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                for cz in lo.2..=hi.2 {
                    if let Some(v) = self.cells.get(&(cx, cy, cz)) {
                        for &i in v {
                            f(i as usize);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Kd-tree over 3D points with exact, deterministically tie-broken k-NN.
pub struct KdTree {
    points: Vec<[f64; 3]>,
    // Implicit tree over a permutation of point indices: node n owns
    // order[n_lo..n_hi) with the median at the split position.
    order: Vec<u32>,
}

struct Node {
    lo: usize,
    hi: usize,
    axis: usize,
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        if !points.is_empty() {
            build_rec(&points, &mut order, 0, 0, points.len());
        }
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest stored points to `query`, excluding `exclude` when
    /// given, sorted ascending by `(distance^2, index)`.
    pub fn knn(&self, query: [f64; 3], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        // Max-heap keyed by (dist2, index); the lexicographic order makes tie
        // handling identical to a brute-force sort.
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search(
            &Node {
                lo: 0,
                hi: self.points.len(),
                axis: 0,
            },
            query,
            k,
            exclude,
            &mut heap,
        );
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search(
        &self,
        node: &Node,
        query: [f64; 3],
        k: usize,
        exclude: Option<usize>,
        heap: &mut Vec<(f64, usize)>,
    ) {
        if node.lo >= node.hi {
            return;
        }
        let mid = (node.lo + node.hi) / 2;
        let idx = self.order[mid] as usize;
        let p = self.points[idx];

        if Some(idx) != exclude {
            let d = dist2(query, p);
            push_bounded(heap, k, (d, idx));
        }

        if node.hi - node.lo == 1 {
            return;
        }
        let axis = node.axis;
        let next_axis = (axis + 1) % 3;
        let delta = query[axis] - p[axis];
        let near = if delta < 0.0 {
            (node.lo, mid)
        } else {
            (mid + 1, node.hi)
        };
        let far = if delta < 0.0 {
            (mid + 1, node.hi)
        } else {
            (node.lo, mid)
        };

        self.search(
            &Node {
                lo: near.0,
                hi: near.1,
                axis: next_axis,
            },
            query,
            k,
            exclude,
            heap,
        );
        // Non-strict bound keeps boundary ties exact w.r.t. brute force.
        if heap.len() < k || delta * delta <= heap_worst(heap).0 {
            self.search(
                &Node {
                    lo: far.0,
                    hi: far.1,
                    axis: next_axis,
                },
                query,
                k,
                exclude,
                heap,
            );
        }
    }
}

fn heap_worst(heap: &[(f64, usize)]) -> (f64, usize) {
    heap[0]
}

fn push_bounded(heap: &mut Vec<(f64, usize)>, k: usize, item: (f64, usize)) {
    let gt = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_gt();
    if heap.len() < k {
        heap.push(item);
        // Sift up.
        let mut i = heap.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if gt(&heap[i], &heap[parent]) {
                heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    } else if gt(&heap[0], &item) {
        heap[0] = item;
        // Sift down.
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < heap.len() && gt(&heap[l], &heap[largest]) {
                largest = l;
            }
            if r < heap.len() && gt(&heap[r], &heap[largest]) {
                largest = r;
            }
            if largest == i {
                break;
            }
            heap.swap(i, largest);
            i = largest;
        }
    }
}

fn build_rec(points: &[[f64; 3]], order: &mut [u32], axis: usize, lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let next = (axis + 1) % 3;
    build_rec(points, order, next, lo, mid);
    build_rec(points, order, next, mid + 1, hi);
}

/// Brute-force k-NN with the same `(dist2, index)` ordering; the oracle the
/// kd-tree is tested against and a fallback for tiny inputs.
pub fn knn_brute_force(
    points: &[[f64; 3]],
    query: [f64; 3],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (i, dist2(query, *p)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
