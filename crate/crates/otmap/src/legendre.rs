//! Discrete Legendre transforms: fast 1-D conjugation, tensor-grid
//! conjugation in any dimension with exact maximizer bookkeeping, and the
//! double-conjugate convex envelope.
//!
//! The discrete Legendre transform of samples `(x_i, f_i)` evaluated at a
//! slope `y` is `g(y) = max_i <x_i, y> - f_i`. On tensor-product grids the
//! maximum factorizes into nested per-axis maxima, so a `d`-dimensional
//! conjugate is computed by `d` sweeps of 1-D conjugations along lines, each
//! recording its per-axis maximizer so the global maximizer (the subgradient
//! location) can be backtracked exactly. Ties resolve to the smallest
//! row-major index, making every result deterministic.

use crate::{tensor, Error, Grid, Result, ScalarField};

/// 1-D discrete Legendre transform by upper-envelope merge.
///
/// Given nodes `x` (strictly ascending), values `f`, and query slopes `y`
/// (ascending), returns `g(y_j) = max_i (x_i * y_j - f_i)` for every `j` in
/// `O(n + m)` after the envelope build. Each output is computed as an exact
/// `x_i * y_j - f_i` expression, so values agree with the brute-force
/// maximum to rounding error.
///
/// # Errors
///
/// Rejects empty inputs, mismatched lengths, non-ascending `x` or `y`, and
/// non-finite node data.
pub fn llt_1d(x: &[f64], f: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("legendre transform", "empty node or query set"));
    }
    if x.len() != f.len() {
        return Err(Error::DimensionMismatch {
            context: "legendre transform samples",
            expected: x.len(),
            got: f.len(),
        });
    }
    if x.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(
            "legendre transform",
            "nodes must be strictly ascending",
        ));
    }
    if y.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid(
            "legendre transform",
            "query slopes must be ascending",
        ));
    }
    if x.iter().chain(f).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("legendre transform", "non-finite input"));
    }

    // Upper envelope of the lines t -> x_i * t - f_i, slopes ascending.
    // `hull` holds indices into x/f; a line is popped when its predecessor
    // and successor already dominate it everywhere.
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let b = hull[hull.len() - 1];
            let a = hull[hull.len() - 2];
            // Line b is redundant iff the crossing of a and i lies left of
            // (or at) the crossing of a and b:
            // (f_i - f_a)(x_b - x_a) <= (f_b - f_a)(x_i - x_a).
            if (f[i] - f[a]) * (x[b] - x[a]) <= (f[b] - f[a]) * (x[i] - x[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    // Sweep ascending slopes, advancing along the envelope greedily.
    let mut out = Vec::with_capacity(y.len());
    let mut seg = 0usize;
    for &t in y {
        while seg + 1 < hull.len() {
            let cur = hull[seg];
            let nxt = hull[seg + 1];
            if x[nxt] * t - f[nxt] >= x[cur] * t - f[cur] {
                seg += 1;
            } else {
                break;
            }
        }
        let i = hull[seg];
        out.push(x[i] * t - f[i]);
    }
    Ok(out)
}

/// Value and maximizer of a conjugate sampled on a grid: the conjugate field
/// on the slope grid, plus the flat source-grid index of the maximizing node
/// at every slope node.
#[derive(Debug, Clone)]
pub struct DiscreteConjugate {
    values: ScalarField,
    argmax: Vec<u32>,
}

impl DiscreteConjugate {
    /// The conjugate sampled on the slope grid.
    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    /// Consumes the conjugate, keeping only its values.
    pub fn into_values(self) -> ScalarField {
        self.values
    }

    /// Flat source-grid index of the maximizer at slope node `flat`.
    ///
    /// The maximizing node's coordinates form a subgradient of the conjugate
    /// at that slope node. Among exact ties the smallest row-major index is
    /// reported.
    pub fn argmax(&self, flat: usize) -> usize {
        self.argmax[flat] as usize
    }
}

/// Discrete Legendre transform of a field sampled on its grid, evaluated at
/// every node of `slopes`: `g(y) = max over source nodes of <x, y> - f(x)`.
///
/// Runs `d` per-axis sweeps (cost `O(d * n^(d+1))` for comparable grids) and
/// backtracks exact per-axis maximizers, so ties resolve to the smallest
/// row-major source index.
///
/// # Errors
///
/// The source and slope grids must have equal dimension, and the source grid
/// must be small enough for `u32` maximizer indices.
pub fn legendre_d(f: &ScalarField, slopes: &Grid) -> Result<DiscreteConjugate> {
    let grid_x = f.grid();
    let d = grid_x.dim();
    if slopes.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "conjugate slope grid",
            expected: d,
            got: slopes.dim(),
        });
    }
    if grid_x.node_count() > u32::MAX as usize {
        return Err(Error::invalid(
            "conjugate source grid",
            "too many nodes for maximizer bookkeeping",
        ));
    }
    let nx = grid_x.n();
    let ny = slopes.n();
    let x_nodes: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..nx).map(|k| grid_x.node_coord(a, k)).collect())
        .collect();
    let y_nodes: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..ny).map(|k| slopes.node_coord(a, k)).collect())
        .collect();

    // Shape starts all-source and flips axis by axis (last axis first) to
    // all-slope; tables[a] records the per-axis maximizer for pass `a`.
    let mut shape = vec![nx; d];
    let mut work = f.values().to_vec();
    let mut tables: Vec<Vec<u32>> = vec![Vec::new(); d];
    for axis in (0..d).rev() {
        let first_pass = axis == d - 1;
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = ny;
        let mut out = vec![0.0; tensor::element_count(&out_shape)];
        let mut table = vec![0u32; out.len()];
        let mut line = vec![0.0; nx];
        let xs = &x_nodes[axis];
        let ys = &y_nodes[axis];
        for o in 0..outer {
            let in_base = o * nx * inner;
            let out_base = o * ny * inner;
            for t in 0..inner {
                tensor::gather(&work, in_base + t, inner, &mut line);
                if first_pass {
                    // First pass consumes the field itself: x*y - f.
                    for v in line.iter_mut() {
                        *v = -*v;
                    }
                }
                for (j, &yv) in ys.iter().enumerate() {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_k = 0u32;
                    for (k, (&xv, &dv)) in xs.iter().zip(&line).enumerate() {
                        let v = xv * yv + dv;
                        if v > best {
                            best = v;
                            best_k = k as u32;
                        }
                    }
                    out[out_base + t + j * inner] = best;
                    table[out_base + t + j * inner] = best_k;
                }
            }
        }
        work = out;
        shape = out_shape;
        tables[axis] = table;
    }

    // Backtrack the full maximizer for every slope node: pass `a` is indexed
    // by source indices on axes < a and slope indices on axes >= a.
    let node_count = slopes.node_count();
    let mut argmax = vec![0u32; node_count];
    let mut j_multi = vec![0usize; d];
    let mut i_multi = vec![0usize; d];
    let slope_shape = vec![ny; d];
    for flat in 0..node_count {
        tensor::unravel(flat, &slope_shape, &mut j_multi);
        for a in 0..d {
            let mut idx = 0usize;
            for (axis, len) in (0..d).map(|axis| (axis, if axis < a { nx } else { ny })) {
                let coord = if axis < a { i_multi[axis] } else { j_multi[axis] };
                idx = idx * len + coord;
            }
            i_multi[a] = tables[a][idx] as usize;
        }
        argmax[flat] = grid_x.flat_index(&i_multi) as u32;
    }

    let values = ScalarField::new(slopes.clone(), work)?;
    Ok(DiscreteConjugate { values, argmax })
}

/// Double-conjugate convex envelope: conjugates `f` onto `slopes`, then
/// conjugates back onto `f`'s own grid.
///
/// The result lies at or below `f` at every node, is convex along every grid
/// axis (second differences nonnegative to rounding), and is idempotent.
/// Its tightness depends on how well `slopes` covers `f`'s subgradients.
///
/// # Errors
///
/// Same conditions as [`legendre_d`].
pub fn convex_envelope_via(f: &ScalarField, slopes: &Grid) -> Result<ScalarField> {
    let forward = legendre_d(f, slopes)?;
    let back = legendre_d(forward.values(), f.grid())?;
    Ok(back.into_values())
}

/// Closed-form Legendre conjugate of the box-restricted quadratic
/// `f(x) = (a/2)|x|^2 + <t, x> + c` on an axis-aligned box: the supremum of
/// `<x, y> - f(x)` over the box separates per axis, and each axis maximizer
/// is the unconstrained stationary point `(y_i - t_i) / a` clamped to the
/// axis interval.
///
/// Requires `a > 0`.
pub fn quadratic_conjugate_on_box(
    a: f64,
    t: &[f64],
    c: f64,
    lower: &[f64],
    upper: &[f64],
    y: &[f64],
) -> f64 {
    debug_assert!(a > 0.0);
    debug_assert_eq!(t.len(), y.len());
    debug_assert_eq!(lower.len(), y.len());
    debug_assert_eq!(upper.len(), y.len());
    let mut total = -c;
    for axis in 0..y.len() {
        let slope = y[axis] - t[axis];
        let x_star = (slope / a).clamp(lower[axis], upper[axis]);
        total += x_star * slope - 0.5 * a * x_star * x_star;
    }
    total
}
