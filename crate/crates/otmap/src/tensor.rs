//! Row-major flat-tensor helpers shared by the wavelet and conjugation passes.
//!
//! Tensors are stored as flat `Vec<f64>` in row-major order: axis 0 varies
//! slowest, the last axis fastest. These helpers enumerate 1-D lines along an
//! axis and convert between flat and multi indices without allocating per
//! element.

/// Total number of elements of a row-major tensor with the given shape.
pub(crate) fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for the given shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1usize; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        out[axis] = out[axis + 1] * shape[axis + 1];
    }
    out
}

/// Visits every 1-D line of a row-major tensor along `axis`.
///
/// For each line, calls `visit(start, stride)`; element `k` of the line lives
/// at flat offset `start + k * stride`. Lines are visited in a fixed
/// deterministic order (row-major over the remaining axes).
pub(crate) fn for_each_line(shape: &[usize], axis: usize, mut visit: impl FnMut(usize, usize)) {
    debug_assert!(axis < shape.len());
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..inner {
            visit(base + i, inner);
        }
    }
}

/// Copies a strided line out of `src` into the contiguous buffer `out`.
pub(crate) fn gather(src: &[f64], start: usize, stride: usize, out: &mut [f64]) {
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = src[start + k * stride];
    }
}

/// Writes the contiguous buffer `line` back into `dst` along a strided line.
pub(crate) fn scatter(dst: &mut [f64], start: usize, stride: usize, line: &[f64]) {
    for (k, value) in line.iter().enumerate() {
        dst[start + k * stride] = *value;
    }
}

/// Converts a flat row-major index into a multi-index, filling `out`.
pub(crate) fn unravel(flat: usize, shape: &[usize], out: &mut [usize]) {
    debug_assert_eq!(shape.len(), out.len());
    let mut rest = flat;
    for axis in (0..shape.len()).rev() {
        out[axis] = rest % shape[axis];
        rest /= shape[axis];
    }
    debug_assert_eq!(rest, 0);
}
