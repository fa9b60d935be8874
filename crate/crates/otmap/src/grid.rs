//! Uniform tensor-product grids on axis-aligned boxes, with multilinear
//! interpolation, second-order finite-difference gradients, and composite
//! Simpson quadrature.
//!
//! All fields are stored flat in row-major order (axis 0 slowest). Node `k`
//! on an axis with box `[lower, upper]` and `n` nodes sits exactly at
//! `lower + k * (upper - lower) / (n - 1)`.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::tensor;
use crate::{Error, Result};

/// Absolute slack (scaled by box magnitude) accepted when locating a point
/// relative to a box edge, so that points computed as `upper` up to rounding
/// still interpolate instead of erroring.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// An axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBounds> for Bounds {
    type Error = Error;

    fn try_from(raw: RawBounds) -> Result<Self> {
        Bounds::new(raw.lower, raw.upper)
    }
}

impl Bounds {
    /// Creates a box from per-axis lower and upper edges.
    ///
    /// # Errors
    ///
    /// Rejects empty or mismatched edge vectors, non-finite coordinates, and
    /// axes with `lower >= upper`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("bounds", "dimension must be at least 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "bounds edges",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(
                    "bounds",
                    format!("non-finite edge on axis {axis}"),
                ));
            }
            if lo >= hi {
                return Err(Error::invalid(
                    "bounds",
                    format!("axis {axis} has lower {lo} >= upper {hi}"),
                ));
            }
        }
        Ok(Bounds { lower, upper })
    }

    /// The same interval `[lower, upper]` on every one of `dim` axes.
    ///
    /// # Errors
    ///
    /// Same conditions as [`Bounds::new`].
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Result<Self> {
        Bounds::new(vec![lower; dim], vec![upper; dim])
    }

    /// Number of axes.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Per-axis lower edges.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Per-axis upper edges.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Box width on one axis.
    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Magnitude scale of one axis, used to make slacks dimensionally sane.
    fn scale(&self, axis: usize) -> f64 {
        self.lower[axis].abs().max(self.upper[axis].abs()).max(1.0)
    }

    /// Whether `point` lies in the box, allowing [`DOMAIN_SLACK`] of overshoot.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point.iter().enumerate().all(|(axis, &p)| {
                let slack = DOMAIN_SLACK * self.scale(axis);
                p >= self.lower[axis] - slack && p <= self.upper[axis] + slack
            })
    }
}

/// A uniform grid with the same odd number of nodes on every axis of a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    #[serde(rename = "box")]
    bounds: Bounds,
    n: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    #[serde(rename = "box")]
    bounds: Bounds,
    n: usize,
}

impl TryFrom<RawGrid> for Grid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        Grid::new(raw.bounds, raw.n)
    }
}

impl Grid {
    /// Creates a grid with `n` nodes per axis on `bounds`.
    ///
    /// # Errors
    ///
    /// `n` must be odd and at least 3 (oddness keeps Simpson quadrature and
    /// dyadic refinement well-defined).
    pub fn new(bounds: Bounds, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(
                "grid",
                format!("need at least 3 nodes per axis, got {n}"),
            ));
        }
        if n % 2 == 0 {
            return Err(Error::invalid(
                "grid",
                format!("nodes per axis must be odd, got {n}"),
            ));
        }
        Ok(Grid { bounds, n })
    }

    /// The underlying box.
    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Number of axes.
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `n^d`.
    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim() as u32)
    }

    /// The shape `[n, n, ..., n]` (one entry per axis).
    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.dim()]
    }

    /// Spacing between adjacent nodes on one axis.
    pub fn step(&self, axis: usize) -> f64 {
        self.bounds.width(axis) / (self.n - 1) as f64
    }

    /// Coordinate of node `k` on one axis: `lower + k * width / (n - 1)`.
    pub fn node_coord(&self, axis: usize, k: usize) -> f64 {
        debug_assert!(k < self.n);
        self.bounds.lower[axis] + k as f64 * self.step(axis)
    }

    /// Fills `out` with the coordinates of the node at flat index `flat`.
    pub fn node_point(&self, flat: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let mut rest = flat;
        for axis in (0..self.dim()).rev() {
            let k = rest % self.n;
            rest /= self.n;
            out[axis] = self.node_coord(axis, k);
        }
        debug_assert_eq!(rest, 0);
    }

    /// Flat row-major index of a multi-index (axis 0 slowest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dim());
        multi.iter().fold(0, |acc, &k| {
            debug_assert!(k < self.n);
            acc * self.n + k
        })
    }

    /// Locates `point` relative to the grid: per axis, the lower cell node
    /// index and the fractional position within that cell (both clamped so
    /// that slack-tolerated boundary overshoot maps to the edge).
    ///
    /// # Errors
    ///
    /// [`Error::OutOfDomain`] naming the first offending axis and coordinate
    /// when `point` escapes the box by more than [`DOMAIN_SLACK`] (scaled by
    /// the box magnitude).
    pub fn locate(&self, point: &[f64], cells: &mut [(usize, f64)]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "point coordinates",
                expected: self.dim(),
                got: point.len(),
            });
        }
        debug_assert_eq!(cells.len(), self.dim());
        for (axis, &p) in point.iter().enumerate() {
            let lo = self.bounds.lower[axis];
            let hi = self.bounds.upper[axis];
            let slack = DOMAIN_SLACK * self.bounds.scale(axis);
            if !(p >= lo - slack && p <= hi + slack) {
                return Err(Error::OutOfDomain {
                    axis,
                    value: p,
                    lower: lo,
                    upper: hi,
                });
            }
            let t = (p - lo) / self.step(axis);
            let i = (t.floor() as isize).clamp(0, self.n as isize - 2) as usize;
            let frac = (t - i as f64).clamp(0.0, 1.0);
            cells[axis] = (i, frac);
        }
        Ok(())
    }

    /// Composite Simpson quadrature of `f` over the box, where `f` receives
    /// the flat node index and node coordinates.
    ///
    /// Exact for polynomials of per-axis degree at most 3.
    pub fn integrate_nodes(&self, mut f: impl FnMut(usize, &[f64]) -> f64) -> f64 {
        let d = self.dim();
        let axis_weights: Vec<Vec<f64>> = (0..d)
            .map(|a| simpson_weights(self.n, self.step(a)))
            .collect();
        let mut point = vec![0.0; d];
        let mut multi = vec![0usize; d];
        let shape = self.shape();
        let mut total = 0.0;
        for flat in 0..self.node_count() {
            tensor::unravel(flat, &shape, &mut multi);
            let mut w = 1.0;
            for axis in 0..d {
                point[axis] = self.node_coord(axis, multi[axis]);
                w *= axis_weights[axis][multi[axis]];
            }
            total += w * f(flat, &point);
        }
        total
    }
}

/// Composite Simpson weights for `n` (odd) nodes with spacing `step`:
/// `step/3 * [1, 4, 2, 4, ..., 2, 4, 1]`.
pub fn simpson_weights(n: usize, step: f64) -> Vec<f64> {
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut w = vec![0.0; n];
    for (k, slot) in w.iter_mut().enumerate() {
        let unit = if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        *slot = unit * step / 3.0;
    }
    w
}

/// A scalar function sampled at the nodes of a [`Grid`], stored row-major.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawScalarField")]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawScalarField {
    #[serde(rename = "box")]
    bounds: Bounds,
    n: usize,
    values: Vec<f64>,
}

impl TryFrom<RawScalarField> for ScalarField {
    type Error = Error;

    fn try_from(raw: RawScalarField) -> Result<Self> {
        ScalarField::new(Grid::new(raw.bounds, raw.n)?, raw.values)
    }
}

impl Serialize for ScalarField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ScalarField", 3)?;
        st.serialize_field("box", self.grid.bounds())?;
        st.serialize_field("n", &self.grid.n())?;
        st.serialize_field("values", &self.values)?;
        st.end()
    }
}

impl ScalarField {
    /// Wraps pre-computed node values (row-major, length `n^d`).
    ///
    /// # Errors
    ///
    /// Rejects value vectors whose length differs from the node count.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                context: "scalar field values",
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f` at every grid node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut point = vec![0.0; grid.dim()];
        let values = (0..grid.node_count())
            .map(|flat| {
                grid.node_point(flat, &mut point);
                f(&point)
            })
            .collect();
        ScalarField { grid, values }
    }

    /// The grid the field is sampled on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node values, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable node values, row-major.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Consumes the field, returning its node values.
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Multilinear interpolation at `point`.
    ///
    /// The result is a convex combination of the values at the `2^d` corners
    /// of the containing cell, so it is linear in the field and never leaves
    /// the corner value range.
    ///
    /// # Errors
    ///
    /// [`Error::OutOfDomain`] when `point` leaves the box by more than the
    /// slack; [`Error::DimensionMismatch`] on wrong point length.
    pub fn interpolate(&self, point: &[f64]) -> Result<f64> {
        let d = self.grid.dim();
        let mut cells = vec![(0usize, 0.0f64); d];
        self.grid.locate(point, &mut cells)?;
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for (axis, &(i0, frac)) in cells.iter().enumerate() {
                let hi = (corner >> axis) & 1 == 1;
                weight *= if hi { frac } else { 1.0 - frac };
                flat = flat * self.grid.n() + i0 + usize::from(hi);
            }
            if weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        Ok(acc)
    }

    /// Second-order finite-difference gradient at every node.
    ///
    /// Interior nodes use the central stencil `(f[k+1] - f[k-1]) / (2h)`;
    /// edges use the one-sided stencils `(-3/2 f[0] + 2 f[1] - 1/2 f[2]) / h`
    /// and its mirror. Exact for per-axis quadratics, hence for affine fields.
    pub fn gradient(&self) -> VectorField {
        let d = self.grid.dim();
        let n = self.grid.n();
        let shape = self.grid.shape();
        let mut out = vec![0.0; self.values.len() * d];
        let mut line = vec![0.0; n];
        for axis in 0..d {
            let h = self.grid.step(axis);
            tensor::for_each_line(&shape, axis, |start, stride| {
                tensor::gather(&self.values, start, stride, &mut line);
                for k in 0..n {
                    let deriv = if k == 0 {
                        (-1.5 * line[0] + 2.0 * line[1] - 0.5 * line[2]) / h
                    } else if k == n - 1 {
                        (1.5 * line[n - 1] - 2.0 * line[n - 2] + 0.5 * line[n - 3]) / h
                    } else {
                        (line[k + 1] - line[k - 1]) / (2.0 * h)
                    };
                    out[(start + k * stride) * d + axis] = deriv;
                }
            });
        }
        VectorField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Composite Simpson integral of the field over its box.
    pub fn integrate(&self) -> f64 {
        self.grid.integrate_nodes(|flat, _| self.values[flat])
    }

    /// Composite Simpson integral of `self * weight` over the shared box.
    ///
    /// # Errors
    ///
    /// The two fields must live on the same grid.
    pub fn integrate_against(&self, weight: &ScalarField) -> Result<f64> {
        if self.grid != weight.grid {
            return Err(Error::invalid(
                "quadrature",
                "fields live on different grids",
            ));
        }
        Ok(self
            .grid
            .integrate_nodes(|flat, _| self.values[flat] * weight.values[flat]))
    }
}

/// A vector-valued function sampled at the nodes of a [`Grid`].
///
/// Values are stored node-major: the `d` components of node `k` occupy
/// `values[k*d .. (k+1)*d]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawVectorField")]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawVectorField {
    #[serde(rename = "box")]
    bounds: Bounds,
    n: usize,
    values: Vec<Vec<f64>>,
}

impl TryFrom<RawVectorField> for VectorField {
    type Error = Error;

    fn try_from(raw: RawVectorField) -> Result<Self> {
        let grid = Grid::new(raw.bounds, raw.n)?;
        let d = grid.dim();
        if raw.values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                context: "vector field values",
                expected: grid.node_count(),
                got: raw.values.len(),
            });
        }
        let mut flat = Vec::with_capacity(raw.values.len() * d);
        for row in &raw.values {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "vector field component count",
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Ok(VectorField { grid, values: flat })
    }
}

impl Serialize for VectorField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.grid.dim();
        let rows: Vec<&[f64]> = self.values.chunks(d).collect();
        let mut st = serializer.serialize_struct("VectorField", 3)?;
        st.serialize_field("box", self.grid.bounds())?;
        st.serialize_field("n", &self.grid.n())?;
        st.serialize_field("values", &rows)?;
        st.end()
    }
}

impl VectorField {
    /// Wraps pre-computed node vectors (node-major flat storage).
    ///
    /// # Errors
    ///
    /// Rejects storage whose length differs from `node_count * d`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count() * grid.dim();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "vector field storage",
                expected,
                got: values.len(),
            });
        }
        Ok(VectorField { grid, values })
    }

    /// Samples a vector function at every node; `f` fills the output slice.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let d = grid.dim();
        let mut point = vec![0.0; d];
        let mut values = vec![0.0; grid.node_count() * d];
        for flat in 0..grid.node_count() {
            grid.node_point(flat, &mut point);
            f(&point, &mut values[flat * d..(flat + 1) * d]);
        }
        VectorField { grid, values }
    }

    /// The grid the field is sampled on.
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Node-major flat storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The vector at flat node index `flat`.
    pub fn node(&self, flat: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[flat * d..(flat + 1) * d]
    }

    /// One component of the field as a scalar field (copies).
    pub fn component(&self, axis: usize) -> ScalarField {
        let d = self.grid.dim();
        let values = self
            .values
            .chunks(d)
            .map(|chunk| chunk[axis])
            .collect::<Vec<_>>();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Multilinear interpolation of every component at `point`, filling `out`.
    ///
    /// # Errors
    ///
    /// Same domain conditions as [`ScalarField::interpolate`].
    pub fn interpolate_into(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.grid.dim();
        debug_assert_eq!(out.len(), d);
        let mut cells = vec![(0usize, 0.0f64); d];
        self.grid.locate(point, &mut cells)?;
        out.fill(0.0);
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for (axis, &(i0, frac)) in cells.iter().enumerate() {
                let hi = (corner >> axis) & 1 == 1;
                weight *= if hi { frac } else { 1.0 - frac };
                flat = flat * self.grid.n() + i0 + usize::from(hi);
            }
            if weight != 0.0 {
                let node = &self.values[flat * d..(flat + 1) * d];
                for (o, v) in out.iter_mut().zip(node) {
                    *o += weight * v;
                }
            }
        }
        Ok(())
    }

    /// Multilinear interpolation of every component at `point`.
    ///
    /// # Errors
    ///
    /// Same domain conditions as [`ScalarField::interpolate`].
    pub fn interpolate(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.dim()];
        self.interpolate_into(point, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_grid(d: usize, n: usize) -> Grid {
        Grid::new(Bounds::cube(0.0, 1.0, d).unwrap(), n).unwrap()
    }

    #[test]
    fn node_coordinates_follow_affine_formula() {
        let grid = Grid::new(Bounds::cube(-0.5, 1.5, 1).unwrap(), 5).unwrap();
        let expected = [-0.5, 0.0, 0.5, 1.0, 1.5];
        for (k, want) in expected.iter().enumerate() {
            assert_eq!(grid.node_coord(0, k), *want);
        }
    }

    #[test]
    fn grid_rejects_even_or_tiny_node_counts() {
        let b = Bounds::cube(0.0, 1.0, 2).unwrap();
        assert!(Grid::new(b.clone(), 4).is_err());
        assert!(Grid::new(b.clone(), 1).is_err());
        assert!(Grid::new(b, 33).is_ok());
    }

    #[test]
    fn bounds_reject_inverted_and_non_finite_edges() {
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![0.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Bounds::new(vec![], vec![]).is_err());
        assert!(Bounds::new(vec![0.0, -1.0], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn row_major_order_puts_axis_zero_slowest() {
        let grid = unit_grid(2, 3);
        // Flat index of multi-index (1, 2) must be 1*3 + 2 = 5.
        assert_eq!(grid.flat_index(&[1, 2]), 5);
        let mut p = [0.0; 2];
        grid.node_point(5, &mut p);
        assert_eq!(p, [0.5, 1.0]);
    }

    #[test]
    fn interpolation_reproduces_node_values() {
        let grid = Grid::new(Bounds::new(vec![-0.5, 0.25], vec![1.5, 2.0]).unwrap(), 5).unwrap();
        let field = ScalarField::from_fn(grid.clone(), |p| (3.1 * p[0] - 1.7 * p[1]).sin());
        let mut point = vec![0.0; 2];
        for flat in 0..grid.node_count() {
            grid.node_point(flat, &mut point);
            let got = field.interpolate(&point).unwrap();
            assert_relative_eq!(got, field.values()[flat], max_relative = 1e-12);
        }
    }

    #[test]
    fn interpolation_matches_hand_computed_chord() {
        // f(x) = x^2 sampled on [0, 1] with 3 nodes: values 0, 0.25, 1.
        // The chord of the first cell at x = 0.25 has value 0.125 exactly.
        let grid = unit_grid(1, 3);
        let field = ScalarField::from_fn(grid, |p| p[0] * p[0]);
        assert_eq!(field.interpolate(&[0.25]).unwrap(), 0.125);
    }

    #[test]
    fn interpolation_is_linear_in_the_field() {
        let grid = unit_grid(3, 5);
        let f = ScalarField::from_fn(grid.clone(), |p| p[0] * p[1] + p[2]);
        let g = ScalarField::from_fn(grid.clone(), |p| (p[0] - p[2]).cos());
        let combo = ScalarField::new(
            grid,
            f.values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| 2.5 * a - 0.75 * b)
                .collect(),
        )
        .unwrap();
        let point = [0.3, 0.71, 0.119];
        let lhs = combo.interpolate(&point).unwrap();
        let rhs = 2.5 * f.interpolate(&point).unwrap() - 0.75 * g.interpolate(&point).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn interpolation_stays_within_cell_value_range() {
        let grid = unit_grid(2, 5);
        let field = ScalarField::from_fn(grid, |p| (13.0 * p[0]).sin() * (7.0 * p[1]).cos());
        let lo = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = field
            .values()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..20 {
            for j in 0..20 {
                let p = [i as f64 / 19.0, j as f64 / 19.0];
                let v = field.interpolate(&p).unwrap();
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn out_of_domain_error_names_axis_and_coordinate() {
        let grid = unit_grid(2, 3);
        let field = ScalarField::from_fn(grid, |p| p[0]);
        let err = field.interpolate(&[0.5, 1.75]).unwrap_err();
        match err {
            Error::OutOfDomain { axis, value, .. } => {
                assert_eq!(axis, 1);
                assert_eq!(value, 1.75);
            }
            other => panic!("expected OutOfDomain, got {other:?}"),
        }
    }

    #[test]
    fn boundary_slack_accepts_rounding_overshoot() {
        let grid = unit_grid(1, 3);
        let field = ScalarField::from_fn(grid, |p| p[0]);
        let v = field.interpolate(&[1.0 + 5e-13]).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-11);
        assert!(field.interpolate(&[1.0 + 1e-9]).is_err());
    }

    #[test]
    fn gradient_is_exact_for_affine_fields() {
        let grid = Grid::new(Bounds::new(vec![-1.0, 0.5], vec![2.0, 3.5]).unwrap(), 7).unwrap();
        let field = ScalarField::from_fn(grid.clone(), |p| 4.0 * p[0] - 2.5 * p[1] + 0.3);
        let grad = field.gradient();
        for flat in 0..grid.node_count() {
            let g = grad.node(flat);
            assert_relative_eq!(g[0], 4.0, max_relative = 1e-12);
            assert_relative_eq!(g[1], -2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn gradient_is_exact_for_quadratics_including_edges() {
        // Both the central and the one-sided stencils integrate quadratics
        // exactly, so f(x) = x^2 must differentiate to 2x at every node.
        let grid = unit_grid(1, 9);
        let field = ScalarField::from_fn(grid.clone(), |p| p[0] * p[0]);
        let grad = field.gradient();
        for k in 0..grid.n() {
            let x = grid.node_coord(0, k);
            assert_relative_eq!(grad.node(k)[0], 2.0 * x, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_error_shrinks_at_second_order() {
        let max_err = |n: usize| -> f64 {
            let grid = unit_grid(1, n);
            let field = ScalarField::from_fn(grid.clone(), |p| p[0].powi(3));
            let grad = field.gradient();
            (0..n)
                .map(|k| {
                    let x = grid.node_coord(0, k);
                    (grad.node(k)[0] - 3.0 * x * x).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = max_err(65);
        let fine = max_err(129);
        // Halving h must shrink the worst error by roughly 4; allow slop.
        assert!(
            fine <= 0.3 * coarse,
            "coarse {coarse:.3e}, fine {fine:.3e}"
        );
    }

    #[test]
    fn simpson_matches_analytic_exponential_integral() {
        let grid = unit_grid(1, 65);
        let field = ScalarField::from_fn(grid, |p| p[0].exp());
        let exact = std::f64::consts::E - 1.0;
        assert_relative_eq!(field.integrate(), exact, max_relative = 1e-9);
    }

    #[test]
    fn simpson_is_exact_for_cubic_tensor_polynomials() {
        let grid = unit_grid(2, 5);
        let field = ScalarField::from_fn(grid, |p| p[0].powi(3) * p[1]);
        // Integral of x^3 y over the unit square is 1/8.
        assert_relative_eq!(field.integrate(), 0.125, max_relative = 1e-14);
    }

    #[test]
    fn weighted_quadrature_requires_matching_grids() {
        let f = ScalarField::from_fn(unit_grid(1, 5), |p| p[0]);
        let w = ScalarField::from_fn(unit_grid(1, 7), |_| 1.0);
        assert!(f.integrate_against(&w).is_err());
        let w_ok = ScalarField::from_fn(unit_grid(1, 5), |_| 2.0);
        assert_relative_eq!(
            f.integrate_against(&w_ok).unwrap(),
            1.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn scalar_field_json_round_trips() {
        let grid = Grid::new(Bounds::new(vec![-0.5, 0.0], vec![1.5, 4.0]).unwrap(), 3).unwrap();
        let field = ScalarField::from_fn(grid, |p| p[0] * 7.0 + p[1].exp());
        let text = serde_json::to_string(&field).unwrap();
        assert!(text.contains("\"box\""), "{text}");
        let back: ScalarField = serde_json::from_str(&text).unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn vector_field_json_round_trips_with_nested_rows() {
        let grid = unit_grid(2, 3);
        let field = VectorField::from_fn(grid, |p, out| {
            out[0] = p[0] + 1.0;
            out[1] = p[1] * p[0];
        });
        let text = serde_json::to_string(&field).unwrap();
        let back: VectorField = serde_json::from_str(&text).unwrap();
        assert_eq!(field, back);
    }

    #[test]
    fn scalar_field_deserialization_validates_shape() {
        let bad = r#"{"box":{"lower":[0.0],"upper":[1.0]},"n":3,"values":[1.0,2.0]}"#;
        assert!(serde_json::from_str::<ScalarField>(bad).is_err());
        let even = r#"{"box":{"lower":[0.0],"upper":[1.0]},"n":4,"values":[1.0,2.0,3.0,4.0]}"#;
        assert!(serde_json::from_str::<ScalarField>(even).is_err());
    }

    #[test]
    fn vector_field_interpolation_matches_componentwise_scalar_interpolation() {
        let grid = unit_grid(2, 5);
        let field = VectorField::from_fn(grid.clone(), |p, out| {
            out[0] = (p[0] * 3.0).sin();
            out[1] = p[1] * p[1];
        });
        let p = [0.37, 0.82];
        let via_vec = field.interpolate(&p).unwrap();
        for axis in 0..2 {
            let via_scalar = field.component(axis).interpolate(&p).unwrap();
            assert_relative_eq!(via_vec[axis], via_scalar, max_relative = 1e-13);
        }
    }
}
