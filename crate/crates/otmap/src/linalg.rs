//! Dense linear-algebra kernels used across the crate: LU factorization with
//! partial pivoting for small general systems, a blocked Cholesky
//! factorization for the symmetric positive-definite ridge systems, and
//! cyclic Jacobi eigenvalues for small symmetric matrices.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2};

use crate::{Error, Result};

/// Factors `a` (row-major `n x n`, modified in place) as `P A = L U` with
/// partial pivoting, recording row swaps in `piv`.
///
/// # Errors
///
/// Fails when a pivot falls below `n * eps * max|a|`, i.e. the matrix is
/// numerically singular.
pub fn lu_factor(a: &mut [f64], n: usize, piv: &mut [usize]) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(piv.len(), n);
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
    let tiny = scale * f64::EPSILON * n as f64;
    for (k, p) in piv.iter_mut().enumerate() {
        *p = k;
    }
    for k in 0..n {
        // Select the largest pivot in column k at or below the diagonal.
        let mut best = k;
        let mut best_abs = a[k * n + k].abs();
        for r in k + 1..n {
            let v = a[r * n + k].abs();
            if v > best_abs {
                best = r;
                best_abs = v;
            }
        }
        if best_abs <= tiny {
            return Err(Error::numeric(
                "lu factorization",
                format!("matrix is singular to working precision (pivot {best_abs:.3e})"),
            ));
        }
        if best != k {
            piv.swap(k, best);
            for c in 0..n {
                a.swap(k * n + c, best * n + c);
            }
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let factor = a[r * n + k] / pivot;
            a[r * n + k] = factor;
            if factor != 0.0 {
                for c in k + 1..n {
                    a[r * n + c] -= factor * a[k * n + c];
                }
            }
        }
    }
    Ok(())
}

/// Solves `A x = b` in place given the factorization from [`lu_factor`].
pub fn lu_solve(lu: &[f64], n: usize, piv: &[usize], b: &mut [f64]) {
    debug_assert_eq!(lu.len(), n * n);
    debug_assert_eq!(b.len(), n);
    // Apply the recorded permutation, then forward- and back-substitute.
    let permuted: Vec<f64> = piv.iter().map(|&p| b[p]).collect();
    b.copy_from_slice(&permuted);
    for r in 1..n {
        let mut acc = b[r];
        for c in 0..r {
            acc -= lu[r * n + c] * b[c];
        }
        b[r] = acc;
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= lu[r * n + c] * b[c];
        }
        b[r] = acc / lu[r * n + r];
    }
}

/// Determinant of a row-major `n x n` matrix via LU factorization.
///
/// Numerically singular matrices report determinant zero.
pub fn determinant(a: &[f64], n: usize) -> f64 {
    let mut lu = a.to_vec();
    let mut piv = vec![0usize; n];
    if lu_factor(&mut lu, n, &mut piv).is_err() {
        return 0.0;
    }
    // Sign of the permutation: parity of the number of even-length cycles.
    let mut seen = vec![false; n];
    let mut sign = 1.0f64;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut length = 0usize;
        let mut at = start;
        while !seen[at] {
            seen[at] = true;
            at = piv[at];
            length += 1;
        }
        if length % 2 == 0 {
            sign = -sign;
        }
    }
    (0..n).fold(sign, |acc, k| acc * lu[k * n + k])
}

/// Inverts a row-major `n x n` matrix via LU factorization.
///
/// # Errors
///
/// Propagates the singularity error of [`lu_factor`].
pub fn invert(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut lu = a.to_vec();
    let mut piv = vec![0usize; n];
    lu_factor(&mut lu, n, &mut piv)?;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.fill(0.0);
        col[j] = 1.0;
        lu_solve(&lu, n, &piv, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}

/// Panel width of the blocked Cholesky factorization; wide enough that the
/// panel solve and trailing update run at gemm speed.
const CHOLESKY_BLOCK: usize = 256;

/// Inverts a lower-triangular matrix held in the lower triangle of a
/// row-major `b x b` slice (forward substitution per unit column).
fn invert_lower_triangular(l: ArrayView2<'_, f64>) -> Array2<f64> {
    let b = l.nrows();
    let mut inv = Array2::zeros((b, b));
    for j in 0..b {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in j + 1..b {
            let mut acc = 0.0;
            for k in j..i {
                acc -= l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = acc / l[(i, i)];
        }
    }
    inv
}

/// Factors a symmetric positive-definite matrix in place as `A = L L^T`,
/// storing `L` in the lower triangle (the strict upper triangle is zeroed).
///
/// Right-looking blocked algorithm: each panel factors its diagonal block
/// unblocked, forms the sub-diagonal panel with one matrix product against
/// the explicit inverse of the diagonal factor, and applies the symmetric
/// trailing update in block columns so nearly all flops run inside gemm.
///
/// # Errors
///
/// Fails with a numeric error when a diagonal pivot is not positive, i.e.
/// the matrix is not positive definite to working precision.
pub fn cholesky_factor(a: &mut Array2<f64>) -> Result<()> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut col = 0;
    while col < n {
        let end = (col + CHOLESKY_BLOCK).min(n);
        // Unblocked factorization of the diagonal block (updates from prior
        // panels were already applied by their trailing updates).
        for k in col..end {
            let mut diag = a[(k, k)];
            for c in col..k {
                diag -= a[(k, c)] * a[(k, c)];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::numeric(
                    "cholesky factorization",
                    format!("matrix is not positive definite (pivot {diag:.3e} at index {k})"),
                ));
            }
            let l = diag.sqrt();
            a[(k, k)] = l;
            for r in k + 1..end {
                let mut v = a[(r, k)];
                for c in col..k {
                    v -= a[(r, c)] * a[(k, c)];
                }
                a[(r, k)] = v / l;
            }
        }
        if end < n {
            // Panel: L21 = A21 * L11^{-T} as one gemm against the explicit
            // triangular inverse (the ridge-regularized matrices this path
            // serves keep the diagonal blocks well-conditioned; solutions
            // downstream are polished by iterative refinement).
            let inv11 = invert_lower_triangular(a.slice(s![col..end, col..end]));
            let a21 = a.slice(s![end..n, col..end]).to_owned();
            let mut l21 = a.slice_mut(s![end..n, col..end]);
            general_mat_mul(1.0, &a21, &inv11.t(), 0.0, &mut l21);
            // Symmetric trailing update in block columns of the lower
            // triangle: A[jb.., jb..jbe] -= L21[jb.., :] * L21[jb..jbe, :]^T.
            let mut jb = end;
            while jb < n {
                let jbe = (jb + CHOLESKY_BLOCK).min(n);
                let (panel, mut target) =
                    a.multi_slice_mut((s![jb..n, col..end], s![jb..n, jb..jbe]));
                let panel = panel.view();
                let lj = panel.slice(s![..jbe - jb, ..]);
                general_mat_mul(-1.0, &panel, &lj.t(), 1.0, &mut target);
                jb = jbe;
            }
        }
        col = end;
    }
    // Zero the strict upper triangle so the result is exactly L.
    for r in 0..n {
        for c in r + 1..n {
            a[(r, c)] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_factor`].
pub fn cholesky_solve(l: &ArrayView2<'_, f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for r in 0..n {
        let mut acc = b[r];
        for c in 0..r {
            acc -= l[(r, c)] * b[c];
        }
        b[r] = acc / l[(r, r)];
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= l[(c, r)] * b[c];
        }
        b[r] = acc / l[(r, r)];
    }
}

/// Eigenvalues of a symmetric row-major `n x n` matrix by the cyclic Jacobi
/// method, returned in ascending order.
///
/// Intended for the small (`n <= 10`) Hessian checks; cost is `O(n^3)` per
/// sweep with quadratic convergence once nearly diagonal.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let frob: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-14 * frob;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|k| m[k * n + k]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    eigs
}
