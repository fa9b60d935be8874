//! Critically sampled multilevel db4 wavelet transform on tensor-product
//! grids.
//!
//! Each level maps a length-`L` line to `ceil(L/2)` approximation and
//! `floor(L/2)` detail coefficients via the 8-tap db4 analysis pair with
//! whole-point symmetric boundary handling, so the per-level operator is a
//! square matrix and the transform keeps exactly `n^d` coefficients at every
//! depth. Synthesis applies the exactly computed inverse of each level
//! operator, making analysis/synthesis a bijection — round trips reproduce
//! fields and coefficient sets to rounding error in both directions.
//!
//! In `d` dimensions a level is applied along every axis of the current
//! approximation block. Coefficient sets are ordered coarsest-first: the
//! deepest approximation band, then detail levels from coarsest to finest,
//! each level containing its `2^d - 1` axis-combination bands in ascending
//! band-index order (bit `k` of the index set means detail along axis `k`),
//! row-major within a band. Truncating to the `J` coarsest detail levels is
//! therefore a prefix operation, and the truncated synthesis operator and its
//! adjoint are what the semi-dual optimizer works with.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::{linalg, tensor, Bounds, Error, Grid, Result, ScalarField};

/// Number of filter taps of the db4 pair.
const FILTER_TAPS: usize = 8;

/// db4 analysis low-pass filter (sums to `sqrt(2)`).
const DEC_LO: [f64; FILTER_TAPS] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

/// Alignment phase of the level operator: filter tap `t` of output `k` reads
/// input index `2k + t - PHASE` (boundary-folded). This is the unique phase
/// in `0..8` for which the level operator is invertible at every length; the
/// exhaustive test below guards the choice.
const PHASE: isize = 3;

/// db4 analysis high-pass filter, derived from the low-pass by the quadrature
/// mirror relation `hi[k] = (-1)^(k+1) * lo[TAPS-1-k]`.
fn dec_hi() -> [f64; FILTER_TAPS] {
    let mut hi = [0.0; FILTER_TAPS];
    for (k, slot) in hi.iter_mut().enumerate() {
        let v = DEC_LO[FILTER_TAPS - 1 - k];
        *slot = if k % 2 == 0 { -v } else { v };
    }
    hi
}

/// Reflects an arbitrary index into `0..len` by whole-point symmetry
/// (period `2*len - 2`).
fn fold(i: isize, len: usize) -> usize {
    debug_assert!(len >= 2);
    let period = 2 * (len as isize) - 2;
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Whether one level can be applied to a line of length `len`: the output
/// approximation `ceil(len/2)` must keep at least [`FILTER_TAPS`] samples.
fn level_feasible(len: usize) -> bool {
    (len + 1) / 2 >= FILTER_TAPS
}

/// Maximal number of levels applicable to lines of `n` nodes.
pub fn max_levels(n: usize) -> usize {
    let mut len = n;
    let mut levels = 0;
    while level_feasible(len) {
        levels += 1;
        len = (len + 1) / 2;
    }
    levels
}

/// Dense row-major level-operator matrix for lines of length `len`: the first
/// `ceil(len/2)` rows compute approximation coefficients with [`DEC_LO`], the
/// remaining `floor(len/2)` rows detail coefficients with the high-pass
/// filter, both under whole-point symmetric folding.
fn analysis_matrix(len: usize) -> Vec<f64> {
    let approx = (len + 1) / 2;
    let detail = len / 2;
    let hi = dec_hi();
    let mut a = vec![0.0; len * len];
    for k in 0..approx {
        for (t, &w) in DEC_LO.iter().enumerate() {
            let idx = fold(2 * k as isize + t as isize - PHASE, len);
            a[k * len + idx] += w;
        }
    }
    for k in 0..detail {
        for (t, &w) in hi.iter().enumerate() {
            let idx = fold(2 * k as isize + t as isize - PHASE, len);
            a[(approx + k) * len + idx] += w;
        }
    }
    a
}

/// One decomposition level: the analysis matrix for its input length, the
/// exactly computed inverse used for synthesis, and the inverse's transpose
/// for adjoint applications.
struct LevelOp {
    len: usize,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    synthesis_t: Vec<f64>,
}

impl LevelOp {
    fn build(len: usize) -> Result<Self> {
        let analysis = analysis_matrix(len);
        let synthesis = linalg::invert(&analysis, len).map_err(|_| {
            Error::numeric(
                "wavelet level operator",
                format!("level operator is singular at length {len}"),
            )
        })?;
        let mut synthesis_t = vec![0.0; len * len];
        for r in 0..len {
            for c in 0..len {
                synthesis_t[c * len + r] = synthesis[r * len + c];
            }
        }
        Ok(LevelOp {
            len,
            analysis,
            synthesis,
            synthesis_t,
        })
    }
}

/// Which matrix of a [`LevelOp`] to apply.
#[derive(Clone, Copy)]
enum Apply {
    Analysis,
    Synthesis,
    SynthesisT,
}

/// A multilevel transform plan for grids with `n` nodes per axis.
///
/// The plan is dimension-agnostic: the same per-length level operators are
/// applied along every axis of the current approximation block.
pub struct Transform {
    n: usize,
    /// Per-axis block length after `k` levels; `lengths[0] = n`.
    lengths: Vec<usize>,
    /// `ops[k]` decomposes blocks of length `lengths[k]`.
    ops: Vec<LevelOp>,
}

impl Transform {
    /// Builds the transform plan for `n` (odd, at least 3) nodes per axis.
    ///
    /// # Errors
    ///
    /// Rejects node counts a [`Grid`] would reject, and fails if any level
    /// operator is singular (which the phase choice rules out).
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::invalid(
                "wavelet transform",
                format!("nodes per axis must be odd and at least 3, got {n}"),
            ));
        }
        let mut lengths = vec![n];
        let mut ops = Vec::new();
        let mut len = n;
        while level_feasible(len) {
            ops.push(LevelOp::build(len)?);
            len = (len + 1) / 2;
            lengths.push(len);
        }
        Ok(Transform { n, lengths, ops })
    }

    /// Nodes per axis the plan was built for.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximal decomposition depth for this node count.
    pub fn depth(&self) -> usize {
        self.ops.len()
    }

    /// Per-axis approximation-block length after `k` levels.
    pub fn block_length(&self, k: usize) -> usize {
        self.lengths[k]
    }

    /// Number of free coefficients at truncation scale `scale`: the deepest
    /// approximation band plus the `scale` coarsest detail levels.
    ///
    /// Because one detail level exactly complements one approximation block,
    /// this equals `block_length(depth - scale)^dim`.
    ///
    /// # Errors
    ///
    /// `scale` must not exceed [`Transform::depth`].
    pub fn coeff_count(&self, dim: usize, scale: usize) -> Result<usize> {
        if scale > self.depth() {
            return Err(Error::Config(format!(
                "truncation scale {scale} exceeds maximal depth {}",
                self.depth()
            )));
        }
        Ok(self.lengths[self.depth() - scale].pow(dim as u32))
    }

    /// Applies one level matrix along every axis of the leading
    /// `sub_len^dim` block of the packed array `data` (full shape `n^dim`).
    fn apply_level(&self, op: &LevelOp, which: Apply, data: &mut [f64], dim: usize, sub_len: usize) {
        debug_assert_eq!(op.len, sub_len);
        let matrix = match which {
            Apply::Analysis => &op.analysis,
            Apply::Synthesis => &op.synthesis,
            Apply::SynthesisT => &op.synthesis_t,
        };
        let mut line = vec![0.0; sub_len];
        let mut out = vec![0.0; sub_len];
        for axis in 0..dim {
            for_each_subblock_line(self.n, dim, sub_len, axis, |start, stride| {
                tensor::gather(data, start, stride, &mut line);
                for (r, slot) in out.iter_mut().enumerate() {
                    let row = &matrix[r * sub_len..(r + 1) * sub_len];
                    *slot = row.iter().zip(&line).map(|(m, x)| m * x).sum();
                }
                tensor::scatter(data, start, stride, &out);
            });
        }
    }

    /// Decomposes `field` through `levels` levels.
    ///
    /// The result keeps full information (`n^dim` coefficients);
    /// [`Transform::synthesize`] restores the field to rounding error.
    ///
    /// # Errors
    ///
    /// The field's grid must have `n` nodes per axis and `levels` must not
    /// exceed [`Transform::depth`].
    pub fn analyze(&self, field: &ScalarField, levels: usize) -> Result<WaveletCoeffs> {
        if field.grid().n() != self.n {
            return Err(Error::DimensionMismatch {
                context: "wavelet analysis grid",
                expected: self.n,
                got: field.grid().n(),
            });
        }
        if levels > self.depth() {
            return Err(Error::Config(format!(
                "requested {levels} levels but only {} are feasible at n = {}",
                self.depth(),
                self.n
            )));
        }
        let dim = field.grid().dim();
        let mut work = field.values().to_vec();
        for k in 0..levels {
            self.apply_level(&self.ops[k], Apply::Analysis, &mut work, dim, self.lengths[k]);
        }
        let bands = self
            .band_layout(dim, levels, levels)
            .into_iter()
            .map(|(level, band_index, ranges)| {
                let data = copy_block(&work, self.n, dim, &ranges);
                Band {
                    level,
                    band_index,
                    data,
                }
            })
            .collect();
        Ok(WaveletCoeffs {
            n: self.n,
            dim,
            depth: levels,
            included: levels,
            bands,
        })
    }

    /// Reconstructs the field encoded by `coeffs` on a grid over `bounds`.
    ///
    /// Detail levels absent from a truncated coefficient set enter as zeros.
    ///
    /// # Errors
    ///
    /// The coefficients must match this plan's node count and not exceed its
    /// depth, and `bounds` must match their dimension.
    pub fn synthesize(&self, coeffs: &WaveletCoeffs, bounds: &Bounds) -> Result<ScalarField> {
        if coeffs.n != self.n {
            return Err(Error::DimensionMismatch {
                context: "wavelet synthesis grid",
                expected: self.n,
                got: coeffs.n,
            });
        }
        if bounds.dim() != coeffs.dim {
            return Err(Error::DimensionMismatch {
                context: "wavelet synthesis bounds",
                expected: coeffs.dim,
                got: bounds.dim(),
            });
        }
        if coeffs.depth > self.depth() {
            return Err(Error::Config(format!(
                "coefficient depth {} exceeds feasible depth {}",
                coeffs.depth,
                self.depth()
            )));
        }
        let dim = coeffs.dim;
        let mut work = vec![0.0; self.n.pow(dim as u32)];
        let layout = self.band_layout(dim, coeffs.depth, coeffs.included);
        debug_assert_eq!(layout.len(), coeffs.bands.len());
        for (band, (level, band_index, ranges)) in coeffs.bands.iter().zip(&layout) {
            debug_assert_eq!((band.level, band.band_index), (*level, *band_index));
            paste_block(&mut work, self.n, dim, ranges, &band.data);
        }
        for k in (0..coeffs.depth).rev() {
            self.apply_level(&self.ops[k], Apply::Synthesis, &mut work, dim, self.lengths[k]);
        }
        let grid = Grid::new(bounds.clone(), self.n)?;
        ScalarField::new(grid, work)
    }

    /// Band layout for a depth-`depth` decomposition keeping the `included`
    /// coarsest detail levels: `(level, band_index, per-axis ranges)` in
    /// canonical order (approximation, then levels coarsest to finest).
    fn band_layout(
        &self,
        dim: usize,
        depth: usize,
        included: usize,
    ) -> Vec<(usize, usize, Vec<(usize, usize)>)> {
        debug_assert!(included <= depth && depth < self.lengths.len());
        let mut layout = Vec::with_capacity(1 + included * ((1 << dim) - 1));
        layout.push((0, 0, vec![(0, self.lengths[depth]); dim]));
        for level in 1..=included {
            // Level 1 is the coarsest detail level, produced at full depth.
            let t = depth + 1 - level;
            for combo in 1..(1usize << dim) {
                let ranges = (0..dim)
                    .map(|axis| {
                        if combo >> axis & 1 == 1 {
                            (self.lengths[t], self.lengths[t - 1])
                        } else {
                            (0, self.lengths[t])
                        }
                    })
                    .collect();
                layout.push((level, combo, ranges));
            }
        }
        layout
    }

    /// Builds a full-depth coefficient set from a flat vector of the
    /// `coeff_count(dim, scale)` coarsest coefficients (canonical order);
    /// finer detail levels are absent.
    ///
    /// # Errors
    ///
    /// The flat vector length must equal `coeff_count(dim, scale)`.
    pub fn embed_flat(&self, flat: &[f64], dim: usize, scale: usize) -> Result<WaveletCoeffs> {
        let expected = self.coeff_count(dim, scale)?;
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "flat wavelet coefficients",
                expected,
                got: flat.len(),
            });
        }
        let depth = self.depth();
        let layout = self.band_layout(dim, depth, scale);
        let mut bands = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for (level, band_index, ranges) in layout {
            let size: usize = ranges.iter().map(|(a, b)| b - a).product();
            bands.push(Band {
                level,
                band_index,
                data: flat[offset..offset + size].to_vec(),
            });
            offset += size;
        }
        debug_assert_eq!(offset, expected);
        Ok(WaveletCoeffs {
            n: self.n,
            dim,
            depth,
            included: scale,
            bands,
        })
    }

    /// Truncated synthesis: reconstructs the field spanned by the
    /// `coeff_count(dim, scale)` coarsest coefficients.
    ///
    /// # Errors
    ///
    /// Same conditions as [`Transform::embed_flat`] and
    /// [`Transform::synthesize`].
    pub fn synthesize_flat(
        &self,
        flat: &[f64],
        dim: usize,
        scale: usize,
        bounds: &Bounds,
    ) -> Result<ScalarField> {
        let coeffs = self.embed_flat(flat, dim, scale)?;
        self.synthesize(&coeffs, bounds)
    }

    /// Adjoint of [`Transform::synthesize_flat`]: maps a dual vector over
    /// field nodes to a dual vector over the flat coefficients.
    ///
    /// Satisfies `<synthesize_flat(c), w> = <c, synthesize_flat_transpose(w)>`
    /// for all `c` and `w`.
    ///
    /// # Errors
    ///
    /// `dual` must hold one value per grid node, and `scale` must be
    /// feasible.
    pub fn synthesize_flat_transpose(
        &self,
        dual: &[f64],
        dim: usize,
        scale: usize,
    ) -> Result<Vec<f64>> {
        let nodes = self.n.pow(dim as u32);
        if dual.len() != nodes {
            return Err(Error::DimensionMismatch {
                context: "dual field vector",
                expected: nodes,
                got: dual.len(),
            });
        }
        let expected = self.coeff_count(dim, scale)?;
        let depth = self.depth();
        let mut work = dual.to_vec();
        for k in 0..depth {
            self.apply_level(&self.ops[k], Apply::SynthesisT, &mut work, dim, self.lengths[k]);
        }
        let layout = self.band_layout(dim, depth, scale);
        let mut flat = Vec::with_capacity(expected);
        for (_, _, ranges) in &layout {
            flat.extend_from_slice(&copy_block(&work, self.n, dim, ranges));
        }
        debug_assert_eq!(flat.len(), expected);
        Ok(flat)
    }

    /// Euclidean norms of the columns of the truncated synthesis operator,
    /// in the flat coefficient order of [`Transform::synthesize_flat`].
    ///
    /// The folded boundary handling makes the basis far from normalized
    /// (boundary columns can be orders of magnitude larger than interior
    /// ones), so these norms are the natural diagonal preconditioner for
    /// first-order optimization over the coefficients. The multi-axis
    /// synthesis acts as the same one-axis operator along every axis, so
    /// each column norm is the product of one-axis column norms.
    ///
    /// # Errors
    ///
    /// `scale` must be feasible for this plan.
    pub fn synthesis_column_norms(&self, dim: usize, scale: usize) -> Result<Vec<f64>> {
        let expected = self.coeff_count(dim, scale)?;
        let depth = self.depth();
        let bounds = Bounds::cube(0.0, 1.0, 1)?;
        let mut axis_norms = vec![0.0f64; self.n];
        let mut unit = vec![0.0f64; self.n];
        for (i, slot) in axis_norms.iter_mut().enumerate() {
            unit[i] = 1.0;
            let field = self.synthesize_flat(&unit, 1, depth, &bounds)?;
            *slot = field.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            unit[i] = 0.0;
        }
        let mut norms = Vec::with_capacity(expected);
        for (_, _, ranges) in self.band_layout(dim, depth, scale) {
            // Row-major walk of the band block, multiplying per-axis norms.
            let mut idx: Vec<usize> = ranges.iter().map(|(a, _)| *a).collect();
            'block: loop {
                norms.push(idx.iter().map(|&i| axis_norms[i]).product());
                for axis in (0..dim).rev() {
                    idx[axis] += 1;
                    if idx[axis] < ranges[axis].1 {
                        continue 'block;
                    }
                    idx[axis] = ranges[axis].0;
                }
                break;
            }
        }
        debug_assert_eq!(norms.len(), expected);
        Ok(norms)
    }
}

/// Enumerates the lines along `axis` of the leading `sub_len^dim` block of a
/// packed `n^dim` row-major array, calling `visit(start, stride)`.
fn for_each_subblock_line(
    n: usize,
    dim: usize,
    sub_len: usize,
    axis: usize,
    mut visit: impl FnMut(usize, usize),
) {
    let full_shape = vec![n; dim];
    let strides = tensor::strides(&full_shape);
    let mut idx = vec![0usize; dim];
    loop {
        let start: usize = idx
            .iter()
            .zip(&strides)
            .map(|(i, s)| i * s)
            .sum();
        visit(start, strides[axis]);
        // Odometer over all axes except `axis`, bounded by the block length.
        let mut carry = true;
        for a in (0..dim).rev() {
            if a == axis {
                continue;
            }
            idx[a] += 1;
            if idx[a] < sub_len {
                carry = false;
                break;
            }
            idx[a] = 0;
        }
        if carry {
            break;
        }
    }
}

/// Copies the row-major contents of the sub-block given by per-axis
/// `ranges` out of a packed `n^dim` array.
fn copy_block(src: &[f64], n: usize, dim: usize, ranges: &[(usize, usize)]) -> Vec<f64> {
    let full_shape = vec![n; dim];
    let strides = tensor::strides(&full_shape);
    let size: usize = ranges.iter().map(|(a, b)| b - a).product();
    let mut out = Vec::with_capacity(size);
    let mut idx: Vec<usize> = ranges.iter().map(|(a, _)| *a).collect();
    let last = dim - 1;
    loop {
        let base: usize = idx
            .iter()
            .zip(&strides)
            .take(last)
            .map(|(i, s)| i * s)
            .sum();
        out.extend_from_slice(&src[base + ranges[last].0..base + ranges[last].1]);
        let mut carry = true;
        for a in (0..last).rev() {
            idx[a] += 1;
            if idx[a] < ranges[a].1 {
                carry = false;
                break;
            }
            idx[a] = ranges[a].0;
        }
        if last == 0 || carry {
            break;
        }
    }
    debug_assert_eq!(out.len(), size);
    out
}

/// Writes row-major `data` into the sub-block of a packed `n^dim` array given
/// by per-axis `ranges`; inverse of [`copy_block`].
fn paste_block(dst: &mut [f64], n: usize, dim: usize, ranges: &[(usize, usize)], data: &[f64]) {
    let full_shape = vec![n; dim];
    let strides = tensor::strides(&full_shape);
    let mut idx: Vec<usize> = ranges.iter().map(|(a, _)| *a).collect();
    let last = dim - 1;
    let row = ranges[last].1 - ranges[last].0;
    let mut offset = 0;
    loop {
        let base: usize = idx
            .iter()
            .zip(&strides)
            .take(last)
            .map(|(i, s)| i * s)
            .sum();
        dst[base + ranges[last].0..base + ranges[last].1]
            .copy_from_slice(&data[offset..offset + row]);
        offset += row;
        let mut carry = true;
        for a in (0..last).rev() {
            idx[a] += 1;
            if idx[a] < ranges[a].1 {
                carry = false;
                break;
            }
            idx[a] = ranges[a].0;
        }
        if last == 0 || carry {
            break;
        }
    }
    debug_assert_eq!(offset, data.len());
}

/// One band of a multilevel decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// 0 for the approximation band; detail levels count from 1 = coarsest.
    pub level: usize,
    /// 0 for the approximation band; for details, bit `k` set means detail
    /// along axis `k`.
    pub band_index: usize,
    /// Row-major coefficients of the band.
    pub data: Vec<f64>,
}

/// A multilevel coefficient set: the approximation band at `depth` plus the
/// `included` coarsest detail levels (so `included == depth` is a
/// full-information set and `included < depth` a truncated one).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "RawCoeffs")]
pub struct WaveletCoeffs {
    n: usize,
    dim: usize,
    depth: usize,
    included: usize,
    bands: Vec<Band>,
}

#[derive(Deserialize)]
struct RawCoeffs {
    shape: Vec<usize>,
    depth: usize,
    j: usize,
    bands: Vec<Band>,
}

impl TryFrom<RawCoeffs> for WaveletCoeffs {
    type Error = Error;

    fn try_from(raw: RawCoeffs) -> Result<Self> {
        let dim = raw.shape.len();
        if dim == 0 {
            return Err(Error::invalid("wavelet coefficients", "empty shape"));
        }
        let n = raw.shape[0];
        if raw.shape.iter().any(|&s| s != n) {
            return Err(Error::invalid(
                "wavelet coefficients",
                "per-axis node counts must be equal",
            ));
        }
        let transform = Transform::new(n)?;
        if raw.depth > transform.depth() || raw.j > raw.depth {
            return Err(Error::invalid(
                "wavelet coefficients",
                format!(
                    "depth {} with {} included levels is infeasible at n = {n}",
                    raw.depth, raw.j
                ),
            ));
        }
        let layout = transform.band_layout(dim, raw.depth, raw.j);
        if layout.len() != raw.bands.len() {
            return Err(Error::DimensionMismatch {
                context: "wavelet band count",
                expected: layout.len(),
                got: raw.bands.len(),
            });
        }
        for (band, (level, band_index, ranges)) in raw.bands.iter().zip(&layout) {
            let size: usize = ranges.iter().map(|(a, b)| b - a).product();
            if band.level != *level || band.band_index != *band_index || band.data.len() != size {
                return Err(Error::invalid(
                    "wavelet coefficients",
                    format!(
                        "band (level {}, index {}) violates the canonical layout",
                        band.level, band.band_index
                    ),
                ));
            }
        }
        Ok(WaveletCoeffs {
            n,
            dim,
            depth: raw.depth,
            included: raw.j,
            bands: raw.bands,
        })
    }
}

impl Serialize for WaveletCoeffs {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("WaveletCoeffs", 4)?;
        st.serialize_field("shape", &vec![self.n; self.dim])?;
        st.serialize_field("depth", &self.depth)?;
        st.serialize_field("j", &self.included)?;
        st.serialize_field("bands", &self.bands)?;
        st.end()
    }
}

impl WaveletCoeffs {
    /// Nodes per axis of the underlying grid.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the underlying grid.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Decomposition depth of the approximation band.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of detail levels present (coarsest first).
    pub fn levels(&self) -> usize {
        self.included
    }

    /// The bands in canonical order.
    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Total number of stored coefficients.
    pub fn len(&self) -> usize {
        self.bands.iter().map(|b| b.data.len()).sum()
    }

    /// Whether the set holds no coefficients (never true for valid sets).
    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Concatenates all bands in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for band in &self.bands {
            out.extend_from_slice(&band.data);
        }
        out
    }

    /// Keeps only the `levels` coarsest detail levels (plus the
    /// approximation band).
    ///
    /// # Errors
    ///
    /// `levels` must not exceed the number of levels present.
    pub fn truncate(&self, levels: usize) -> Result<WaveletCoeffs> {
        if levels > self.included {
            return Err(Error::Config(format!(
                "cannot keep {levels} detail levels, only {} are present",
                self.included
            )));
        }
        let keep = 1 + levels * ((1 << self.dim) - 1);
        Ok(WaveletCoeffs {
            n: self.n,
            dim: self.dim,
            depth: self.depth,
            included: levels,
            bands: self.bands[..keep].to_vec(),
        })
    }
}

/// Sup-norm reconstruction error of `field` after truncation to each scale
/// `J = 0..=depth`: entry `J` is the largest absolute node error of the
/// synthesis that keeps only the `J` coarsest detail levels.
///
/// For smooth fields the curve decays geometrically until it hits rounding
/// error at `J = depth` (exact reconstruction).
///
/// # Errors
///
/// Propagates plan construction and analysis errors.
pub fn truncation_error_curve(field: &ScalarField) -> Result<Vec<f64>> {
    let transform = Transform::new(field.grid().n())?;
    let depth = transform.depth();
    let full = transform.analyze(field, depth)?;
    let mut curve = Vec::with_capacity(depth + 1);
    for scale in 0..=depth {
        let truncated = full.truncate(scale)?;
        let rebuilt = transform.synthesize(&truncated, field.grid().bounds())?;
        let err = field
            .values()
            .iter()
            .zip(rebuilt.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        curve.push(err);
    }
    Ok(curve)
}
