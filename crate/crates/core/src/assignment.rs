//! Minimum-cost assignment (Hungarian algorithm) on a square cost matrix.
//!
//! O(n^3) shortest-augmenting-path formulation with row/column potentials.
//! The solver is deterministic: identical inputs produce identical
//! assignments, with no randomized pivoting.

/// Solves the square assignment problem for a row-major `dim x dim` cost
/// matrix, returning `assignment[row] = column` minimizing the total cost.
///
/// All costs must be finite.
pub fn min_cost_assignment(cost: &[f64], dim: usize) -> Vec<usize> {
    assert_eq!(cost.len(), dim * dim, "cost matrix must be dim x dim");
    debug_assert!(cost.iter().all(|c| c.is_finite()), "costs must be finite");
    if dim == 0 {
        return Vec::new();
    }

    const NONE: usize = usize::MAX;
    let virt = dim; // virtual column that seeds each augmentation

    let mut u = vec![0.0f64; dim];
    let mut v = vec![0.0f64; dim + 1];
    let mut row_of_col = vec![NONE; dim + 1];
    let mut way = vec![virt; dim];

    for row in 0..dim {
        row_of_col[virt] = row;
        let mut j0 = virt;
        let mut minv = vec![f64::INFINITY; dim];
        let mut used = vec![false; dim + 1];

        // Grow the alternating tree until a free column is reached.
        while row_of_col[j0] != NONE {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 0..dim {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 * dim + j] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != NONE, "augmenting path must always find a column");
            for j in 0..=dim {
                if used[j] {
                    if row_of_col[j] != NONE {
                        u[row_of_col[j]] += delta;
                    }
                    v[j] -= delta;
                } else if j < dim {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        }

        // Flip matched edges along the path back to the virtual column.
        while j0 != virt {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![NONE; dim];
    for j in 0..dim {
        if row_of_col[j] != NONE {
            assignment[row_of_col[j]] = j;
        }
    }
    debug_assert!(assignment.iter().all(|&j| j != NONE));
    assignment
}

/// Total cost of an assignment under a row-major square matrix.
pub fn assignment_cost(cost: &[f64], dim: usize, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * dim + j])
        .sum()
}
