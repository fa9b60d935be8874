//! Optimal assignment between equal-size point sets under mean squared
//! Euclidean cost, with deterministic tie resolution.
//!
//! The solver is the `O(n^3)` shortest-augmenting-path algorithm with dual
//! reweighting. Its optimal duals certify optimality (all reduced costs are
//! nonnegative, assigned edges tight) and expose degeneracy: when more than
//! `n` edges are tight, multiple optimal assignments exist, and a
//! lexicographic extraction over the tight-edge graph picks the smallest
//! permutation (row by row, each taking its smallest feasible column), so
//! equal inputs always produce identical output.

use serde::{Deserialize, Serialize};

use crate::model::{MatchingModel, TransportMapModel};
use crate::samples::{squared_distance, SampleSet};
use crate::{Error, Result};

/// Reduced costs within this fraction of the cost scale count as tight when
/// probing for degenerate (tied) optima.
const TIE_SLACK: f64 = 1e-10;

/// An optimal matching between two point sets of equal size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAssignment")]
pub struct Assignment {
    n: usize,
    perm: Vec<usize>,
    cost: f64,
}

#[derive(Deserialize)]
struct RawAssignment {
    n: usize,
    perm: Vec<usize>,
    cost: f64,
}

impl TryFrom<RawAssignment> for Assignment {
    type Error = Error;

    fn try_from(raw: RawAssignment) -> Result<Self> {
        if raw.perm.len() != raw.n {
            return Err(Error::DimensionMismatch {
                context: "assignment permutation",
                expected: raw.n,
                got: raw.perm.len(),
            });
        }
        let mut seen = vec![false; raw.n];
        for &j in &raw.perm {
            if j >= raw.n || seen[j] {
                return Err(Error::invalid(
                    "assignment",
                    "perm is not a permutation of 0..n",
                ));
            }
            seen[j] = true;
        }
        if !raw.cost.is_finite() {
            return Err(Error::invalid("assignment", "non-finite cost"));
        }
        Ok(Assignment {
            n: raw.n,
            perm: raw.perm,
            cost: raw.cost,
        })
    }
}

impl Assignment {
    /// Number of matched pairs.
    pub fn len(&self) -> usize {
        self.n
    }

    /// Whether the assignment is empty (never true for valid instances).
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Target index matched to source `i`.
    pub fn target_of(&self, i: usize) -> usize {
        self.perm[i]
    }

    /// The permutation as a slice: `perm[i]` is the target index of source
    /// `i`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Mean squared Euclidean distance over matched pairs.
    pub fn cost(&self) -> f64 {
        self.cost
    }
}

/// Solves the assignment problem between `x` and `y` under squared Euclidean
/// cost, minimizing the mean of `|x_i - y_perm(i)|^2`.
///
/// Among tied optima the lexicographically smallest permutation is returned.
///
/// # Errors
///
/// The sets must be non-empty, of equal size, and of equal dimension.
pub fn assign(x: &SampleSet, y: &SampleSet) -> Result<Assignment> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "assignment point dimension",
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "assignment set sizes",
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::invalid("assignment", "empty point sets"));
    }

    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        let xi = x.point(i);
        for j in 0..n {
            cost[i * n + j] = squared_distance(xi, y.point(j));
        }
    }

    let (mut perm, u, v) = solve_dense(&cost, n);

    // Degeneracy probe: optimal assignments are exactly the perfect
    // matchings of the tight-edge graph. A unique optimum has exactly n
    // tight edges; otherwise extract the lexicographically smallest
    // matching from that graph.
    let scale = cost.iter().fold(0.0f64, |m, &c| m.max(c.abs())).max(1.0);
    let slack = TIE_SLACK * scale;
    let mut tight_edges = 0usize;
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if cost[i * n + j] - u[i] - v[j] <= slack {
                adjacency[i].push(j);
                tight_edges += 1;
            }
        }
    }
    if tight_edges > n {
        if let Some(lex) = lexicographic_matching(&adjacency, n) {
            perm = lex;
        }
    }

    let mean_cost = (0..n)
        .map(|i| squared_distance(x.point(i), y.point(perm[i])))
        .sum::<f64>()
        / n as f64;
    Ok(Assignment {
        n,
        perm,
        cost: mean_cost,
    })
}

/// Builds the raw matching estimator from a solved assignment: training point
/// `x_i` maps to `y_perm(i)`. The model evaluates only at the training points
/// unless extended with [`one_nn_extend`].
///
/// # Errors
///
/// The assignment's size must match the sample sets.
pub fn matching_map(
    assignment: &Assignment,
    x: &SampleSet,
    y: &SampleSet,
) -> Result<TransportMapModel> {
    if assignment.len() != x.len() || assignment.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "matching assignment size",
            expected: assignment.len(),
            got: x.len().min(y.len()),
        });
    }
    let d = y.dim();
    let mut mapped = Vec::with_capacity(x.len() * d);
    for i in 0..x.len() {
        mapped.extend_from_slice(y.point(assignment.target_of(i)));
    }
    let model = MatchingModel::new(x.clone(), SampleSet::new(d, mapped)?, false)?;
    Ok(TransportMapModel::Matching(model))
}

/// Installs the nearest-neighbor extension on a matching model: off-sample
/// queries resolve to the value at the nearest training point (Euclidean
/// distance, ties to the smallest index).
///
/// # Errors
///
/// The model must be of the matching kind.
pub fn one_nn_extend(model: &TransportMapModel) -> Result<TransportMapModel> {
    match model {
        TransportMapModel::Matching(m) => Ok(TransportMapModel::Matching(m.with_extension())),
        other => Err(Error::invalid(
            "nearest-neighbor extension",
            format!("expected a matching model, got kind {:?}", other.kind_name()),
        )),
    }
}

/// Dense shortest-augmenting-path assignment solver.
///
/// Returns the optimal permutation (source to target) together with feasible
/// optimal duals `(u, v)`: every reduced cost `c[i][j] - u[i] - v[j]` is
/// nonnegative and assigned edges are tight.
fn solve_dense(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    const UNASSIGNED: usize = usize::MAX;
    // 1-based column arrays; column 0 is the virtual start of each phase.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_at = vec![UNASSIGNED; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 0..n {
        row_at[0] = i;
        let mut j0 = 0usize;
        min_to.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = row_at[j0];
            let row = &cost[i0 * n..(i0 + 1) * n];
            let u0 = u[i0 + 1];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u0 - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_at[j] + 1] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_at[j0] == UNASSIGNED {
                break;
            }
        }
        // Augment along the recorded alternating path.
        loop {
            let j1 = way[j0];
            row_at[j0] = row_at[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[row_at[j]] = j - 1;
    }
    // Shift duals to 0-based rows; v[0] is the virtual column.
    let u_rows: Vec<f64> = (0..n).map(|i| u[i + 1]).collect();
    let v_cols: Vec<f64> = (1..=n).map(|j| v[j]).collect();
    (perm, u_rows, v_cols)
}

/// Lexicographically smallest perfect matching of a bipartite graph given as
/// per-row ascending adjacency lists, or `None` if no perfect matching
/// exists (cannot happen for tight graphs of optimal duals).
fn lexicographic_matching(adjacency: &[Vec<usize>], n: usize) -> Option<Vec<usize>> {
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    let mut col_taken = vec![false; n];
    for i in 0..n {
        let mut chosen = None;
        for &j in &adjacency[i] {
            if col_taken[j] {
                continue;
            }
            col_taken[j] = true;
            if rows_matchable(adjacency, n, i + 1, &col_taken) {
                chosen = Some(j);
                break;
            }
            col_taken[j] = false;
        }
        let j = chosen?;
        fixed.push(j);
    }
    Some(fixed)
}

/// Whether rows `from..n` can all be matched into the columns still free.
fn rows_matchable(adjacency: &[Vec<usize>], n: usize, from: usize, col_taken: &[bool]) -> bool {
    let rows = n - from;
    if rows == 0 {
        return true;
    }
    let mut match_col = vec![usize::MAX; n];
    let mut matched = 0usize;
    let mut visited = vec![usize::MAX; n];
    for row in from..n {
        let stamp = row;
        if kuhn_augment(adjacency, row, from, col_taken, &mut match_col, &mut visited, stamp) {
            matched += 1;
        } else {
            return false;
        }
    }
    matched == rows
}

/// One augmenting-path search of Kuhn's matching algorithm.
fn kuhn_augment(
    adjacency: &[Vec<usize>],
    row: usize,
    from: usize,
    col_taken: &[bool],
    match_col: &mut [usize],
    visited: &mut [usize],
    stamp: usize,
) -> bool {
    for &j in &adjacency[row] {
        if col_taken[j] || visited[j] == stamp {
            continue;
        }
        visited[j] = stamp;
        if match_col[j] == usize::MAX
            || (match_col[j] >= from
                && kuhn_augment(adjacency, match_col[j], from, col_taken, match_col, visited, stamp))
        {
            match_col[j] = row;
            return true;
        }
    }
    false
}
