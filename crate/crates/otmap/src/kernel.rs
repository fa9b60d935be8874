//! Gaussian-kernel ridge regression over matched sample pairs.
//!
//! Given source points and their matched targets, this module fits the
//! smoothing step of the two-stage map estimator: represent the map as a
//! weighted sum of Gaussian radial basis functions centered at the training
//! points, with the weight matrix solving a ridge-regularized normal system.
//! Parameter selection sweeps a grid of (bandwidth, ridge) pairs and scores
//! each fitted model against known ground truth on a held-out sample.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky_factor, cholesky_solve};
use crate::samples::{squared_distance, SampleSet};
use crate::{Error, Result};

/// Relative residual bound every fitted weight matrix must satisfy on the
/// ridge system.
const RESIDUAL_BOUND: f64 = 1e-8;

/// Bandwidth and ridge strength for a Gaussian-kernel ridge regression.
///
/// The kernel is `k(x, y) = exp(-nu_kernel * |x - y|^2)` and the weights
/// solve `(K + nu_ridge * I) W = Ytilde`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelParams")]
pub struct KernelParams {
    nu_kernel: f64,
    nu_ridge: f64,
}

#[derive(Deserialize)]
struct RawKernelParams {
    nu_kernel: f64,
    nu_ridge: f64,
}

impl TryFrom<RawKernelParams> for KernelParams {
    type Error = Error;

    fn try_from(raw: RawKernelParams) -> Result<Self> {
        KernelParams::new(raw.nu_kernel, raw.nu_ridge)
    }
}

impl KernelParams {
    /// Validates positivity and finiteness of both parameters.
    pub fn new(nu_kernel: f64, nu_ridge: f64) -> Result<Self> {
        for (name, value) in [("nu_kernel", nu_kernel), ("nu_ridge", nu_ridge)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::invalid(name, "must be a finite positive number"));
            }
        }
        Ok(KernelParams { nu_kernel, nu_ridge })
    }

    /// Squared-distance factor inside the Gaussian kernel.
    pub fn nu_kernel(&self) -> f64 {
        self.nu_kernel
    }

    /// Ridge weight added to the Gram diagonal.
    pub fn nu_ridge(&self) -> f64 {
        self.nu_ridge
    }
}

/// Default bandwidth grid: nine half-decade steps from `1e-9` to `1e-5`.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-9.0 + 0.5 * k as f64)).collect()
}

/// Default ridge grid: nine half-decade steps from `1e-5` to `1e-1`.
pub fn default_ridge_grid() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-5.0 + 0.5 * k as f64)).collect()
}

/// A fitted kernel ridge regression map from `R^d` to `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelModel", into = "RawKernelModel")]
pub struct KernelModel {
    train_x: SampleSet,
    /// Row-major `n x d` weight matrix; row `i` weights the basis function
    /// centered at training point `i`.
    weights: Vec<f64>,
    params: KernelParams,
}

#[derive(Serialize, Deserialize)]
struct RawKernelModel {
    kind: String,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    nu_kernel: f64,
    nu_ridge: f64,
}

impl From<KernelModel> for RawKernelModel {
    fn from(model: KernelModel) -> Self {
        let d = model.train_x.dim();
        RawKernelModel {
            kind: "kernel".to_owned(),
            x: model.train_x.iter().map(<[f64]>::to_vec).collect(),
            w: model.weights.chunks(d).map(<[f64]>::to_vec).collect(),
            nu_kernel: model.params.nu_kernel,
            nu_ridge: model.params.nu_ridge,
        }
    }
}

impl TryFrom<RawKernelModel> for KernelModel {
    type Error = Error;

    fn try_from(raw: RawKernelModel) -> Result<Self> {
        if raw.kind != "kernel" {
            return Err(Error::invalid("kernel model", "kind must be \"kernel\""));
        }
        let train_x = SampleSet::from_rows(&raw.x)?;
        if raw.w.len() != train_x.len() {
            return Err(Error::DimensionMismatch {
                context: "kernel weight rows",
                expected: train_x.len(),
                got: raw.w.len(),
            });
        }
        let mut weights = Vec::with_capacity(train_x.len() * train_x.dim());
        for row in &raw.w {
            if row.len() != train_x.dim() {
                return Err(Error::DimensionMismatch {
                    context: "kernel weight row width",
                    expected: train_x.dim(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("kernel model", "non-finite weight"));
            }
            weights.extend_from_slice(row);
        }
        let params = KernelParams::new(raw.nu_kernel, raw.nu_ridge)?;
        Ok(KernelModel {
            train_x,
            weights,
            params,
        })
    }
}

impl KernelModel {
    /// Training points the basis functions are centered at.
    pub fn train_x(&self) -> &SampleSet {
        &self.train_x
    }

    /// Row-major `n x d` weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Parameters the model was fitted with.
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Evaluates the fitted map at one query point, writing into `out`.
    ///
    /// # Errors
    ///
    /// The query and output must match the training dimension.
    pub fn predict_into(&self, query: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.train_x.dim();
        if query.len() != d {
            return Err(Error::DimensionMismatch {
                context: "kernel query dimension",
                expected: d,
                got: query.len(),
            });
        }
        if out.len() != d {
            return Err(Error::DimensionMismatch {
                context: "kernel output dimension",
                expected: d,
                got: out.len(),
            });
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let nu = self.params.nu_kernel;
        for (center, w) in self.train_x.iter().zip(self.weights.chunks(d)) {
            let k = (-nu * squared_distance(center, query)).exp();
            for (o, &wj) in out.iter_mut().zip(w) {
                *o += k * wj;
            }
        }
        Ok(())
    }

    /// Evaluates the fitted map at one query point.
    ///
    /// # Errors
    ///
    /// The query must match the training dimension.
    pub fn predict(&self, query: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.train_x.dim()];
        self.predict_into(query, &mut out)?;
        Ok(out)
    }

    /// Evaluates the fitted map at every point of `queries`.
    ///
    /// # Errors
    ///
    /// The queries must match the training dimension.
    pub fn predict_set(&self, queries: &SampleSet) -> Result<SampleSet> {
        let d = self.train_x.dim();
        let mut flat = vec![0.0; queries.len() * d];
        for (query, out) in queries.iter().zip(flat.chunks_mut(d)) {
            self.predict_into(query, out)?;
        }
        SampleSet::new(d, flat)
    }
}

/// Builds the Gaussian Gram matrix `K[i][j] = exp(-nu_kernel |x_i - x_j|^2)`.
///
/// The result is symmetric with unit diagonal and entries in `(0, 1]`.
///
/// # Errors
///
/// The point set must be non-empty and `nu_kernel` positive.
pub fn gram(x: &SampleSet, nu_kernel: f64) -> Result<Array2<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("gram", "empty point set"));
    }
    if !nu_kernel.is_finite() || nu_kernel <= 0.0 {
        return Err(Error::invalid("nu_kernel", "must be a finite positive number"));
    }
    let n = x.len();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        let xi = x.point(i);
        for j in (i + 1)..n {
            let v = (-nu_kernel * squared_distance(xi, x.point(j))).exp();
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}

/// Fits kernel ridge weights for the matched pairs `(x_i, ytilde_i)`.
///
/// Solves `(K + nu_ridge I) W = Ytilde` column by column via a Cholesky
/// factorization followed by one step of iterative refinement, and verifies
/// the relative residual is at most `1e-8`.
///
/// # Errors
///
/// Sizes and dimensions must agree, and the solve must meet the residual
/// bound (guaranteed for positive ridge at this crate's problem scales).
pub fn fit(x: &SampleSet, ytilde: &SampleSet, params: KernelParams) -> Result<KernelModel> {
    let k = gram(x, params.nu_kernel)?;
    fit_with_gram(x, &k, ytilde, params)
}

/// [`fit`] with a precomputed Gram matrix for `x` at `params.nu_kernel()`,
/// letting parameter sweeps share one Gram across ridge values.
///
/// # Errors
///
/// Same conditions as [`fit`].
pub fn fit_with_gram(
    x: &SampleSet,
    k: &Array2<f64>,
    ytilde: &SampleSet,
    params: KernelParams,
) -> Result<KernelModel> {
    let n = x.len();
    let d = x.dim();
    if ytilde.len() != n {
        return Err(Error::DimensionMismatch {
            context: "matched target count",
            expected: n,
            got: ytilde.len(),
        });
    }
    if ytilde.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "matched target dimension",
            expected: d,
            got: ytilde.dim(),
        });
    }
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "gram matrix order",
            expected: n,
            got: k.nrows(),
        });
    }

    let mut system = k.clone();
    for i in 0..n {
        system[[i, i]] += params.nu_ridge;
    }
    let mut factor = system.clone();
    cholesky_factor(&mut factor)
        .map_err(|_| Error::numeric("kernel ridge solve", "factorization failed"))?;
    let factor_view = factor.view();

    // Column-wise solve with two-phase iterative refinement. Plain-precision
    // refinement is cheap but both its corrections and its residual
    // measurements bottom out near (roundoff x matrix norm x weight norm),
    // which can sit above the contract when a small ridge inflates the
    // weights; compensated residuals see through that floor, so they certify
    // the result and drive further corrections when needed.
    let mut weights = vec![0.0; n * d];
    let mut column = vec![0.0; n];
    let mut residual = vec![0.0; n];
    let mut worst_ratio = 0.0f64;
    for axis in 0..d {
        for i in 0..n {
            column[i] = ytilde.point(i)[axis];
        }
        let rhs = column.clone();
        let rhs_norm = norm(&rhs).max(f64::MIN_POSITIVE);
        let target = 0.1 * RESIDUAL_BOUND * rhs_norm;
        cholesky_solve(&factor_view, &mut column);

        let mut previous = f64::INFINITY;
        for _ in 0..4 {
            residual_plain(&system, &column, &rhs, &mut residual);
            let achieved = norm(&residual);
            if achieved <= target || achieved >= 0.5 * previous {
                break;
            }
            previous = achieved;
            cholesky_solve(&factor_view, &mut residual);
            for i in 0..n {
                column[i] += residual[i];
            }
        }

        residual_compensated(&system, &column, &rhs, &mut residual);
        let mut achieved = norm(&residual);
        let mut stagnant = 0;
        while achieved > target && stagnant < 2 {
            previous = achieved;
            cholesky_solve(&factor_view, &mut residual);
            for i in 0..n {
                column[i] += residual[i];
            }
            residual_compensated(&system, &column, &rhs, &mut residual);
            achieved = norm(&residual);
            if achieved >= 0.5 * previous {
                stagnant += 1;
            } else {
                stagnant = 0;
            }
        }

        worst_ratio = worst_ratio.max(achieved / rhs_norm);
        for i in 0..n {
            weights[i * d + axis] = column[i];
        }
    }

    if worst_ratio > RESIDUAL_BOUND {
        return Err(Error::numeric(
            "kernel ridge solve",
            "residual exceeds the 1e-8 relative bound; the ridge is too small \
             for this kernel matrix at double precision",
        ));
    }

    Ok(KernelModel {
        train_x: x.clone(),
        weights,
        params,
    })
}

/// Relative residual `|(K + nu_ridge I) W - Ytilde| / |Ytilde|` (Frobenius)
/// of a model against the matched targets it was fitted to, measured with
/// compensated arithmetic so ill-conditioned systems are scored by their
/// true residual rather than by measurement noise.
///
/// # Errors
///
/// The targets must match the model's training data in size and dimension.
pub fn relative_residual(model: &KernelModel, ytilde: &SampleSet) -> Result<f64> {
    let x = model.train_x();
    let n = x.len();
    let d = x.dim();
    if ytilde.len() != n || ytilde.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "matched target shape",
            expected: n * d,
            got: ytilde.len() * ytilde.dim(),
        });
    }
    let mut system = gram(x, model.params().nu_kernel())?;
    for i in 0..n {
        system[[i, i]] += model.params().nu_ridge();
    }
    let mut column = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut residual = vec![0.0; n];
    let mut numerator = 0.0f64;
    let mut denominator = 0.0f64;
    for axis in 0..d {
        for i in 0..n {
            column[i] = model.weights()[i * d + axis];
            rhs[i] = ytilde.point(i)[axis];
        }
        residual_compensated(&system, &column, &rhs, &mut residual);
        numerator += residual.iter().map(|v| v * v).sum::<f64>();
        denominator += rhs.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(numerator.sqrt() / denominator.sqrt().max(f64::MIN_POSITIVE))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Writes `residual = rhs - system * solution` in working precision.
fn residual_plain(system: &Array2<f64>, solution: &[f64], rhs: &[f64], residual: &mut [f64]) {
    let n = rhs.len();
    for i in 0..n {
        let row = system.row(i);
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * solution[j];
        }
        residual[i] = rhs[i] - acc;
    }
}

/// Exact sum of two doubles as a rounded value plus error term.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Splits a double into high and low halves for exact multiplication.
fn veltkamp_split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a; // 2^27 + 1
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Exact product of two doubles as a rounded value plus error term.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = veltkamp_split(a);
    let (bh, bl) = veltkamp_split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// Writes `residual = rhs - system * solution` with compensated products and
/// sums, accurate even when the plain evaluation is noise-dominated.
fn residual_compensated(
    system: &Array2<f64>,
    solution: &[f64],
    rhs: &[f64],
    residual: &mut [f64],
) {
    let n = rhs.len();
    for i in 0..n {
        let row = system.row(i);
        let mut sum = 0.0f64;
        let mut compensation = 0.0f64;
        for j in 0..n {
            let (product, product_error) = two_prod(row[j], solution[j]);
            let (next, sum_error) = two_sum(sum, product);
            sum = next;
            compensation += product_error + sum_error;
        }
        let (main, error) = two_sum(rhs[i], -sum);
        residual[i] = main + (error - compensation);
    }
}

/// One scored point of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEntry {
    /// Parameters of this fit.
    pub params: KernelParams,
    /// Mean squared error of the fitted map against ground truth on the
    /// held-out points.
    pub holdout_mse: f64,
}

/// Result of an oracle parameter sweep: the winning model plus the full
/// score table.
#[derive(Debug, Clone)]
pub struct OracleSelection {
    /// Parameters minimizing the held-out mean squared error.
    pub params: KernelParams,
    /// The model fitted at the winning parameters.
    pub model: KernelModel,
    /// Every `(params, holdout mse)` pair evaluated, in sweep order
    /// (bandwidth-major ascending).
    pub sweep: Vec<SweepEntry>,
}

/// Sweeps the `(bandwidth, ridge)` grid, fitting on `(x, ytilde)` and
/// scoring each model's mean squared error against `holdout_truth` at
/// `holdout_x`; returns the model minimizing the held-out error.
///
/// Exact score ties resolve to the lexicographically smaller
/// `(nu_kernel, nu_ridge)` pair.
///
/// # Errors
///
/// Both grids must be non-empty with positive entries; the holdout points
/// and their ground-truth images must agree in size and dimension with the
/// training data.
pub fn oracle_select(
    x: &SampleSet,
    ytilde: &SampleSet,
    holdout_x: &SampleSet,
    holdout_truth: &SampleSet,
    grid_bandwidth: &[f64],
    grid_ridge: &[f64],
) -> Result<OracleSelection> {
    if grid_bandwidth.is_empty() || grid_ridge.is_empty() {
        return Err(Error::invalid("parameter sweep", "empty parameter grid"));
    }
    if holdout_x.len() != holdout_truth.len() {
        return Err(Error::DimensionMismatch {
            context: "holdout truth count",
            expected: holdout_x.len(),
            got: holdout_truth.len(),
        });
    }
    if holdout_x.dim() != x.dim() || holdout_truth.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            context: "holdout dimension",
            expected: x.dim(),
            got: holdout_x.dim().min(holdout_truth.dim()),
        });
    }

    for &value in grid_bandwidth.iter().chain(grid_ridge.iter()) {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::invalid(
                "parameter sweep",
                "grid entries must be finite positive numbers",
            ));
        }
    }
    let mut bandwidths = grid_bandwidth.to_vec();
    bandwidths.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));
    let mut ridges = grid_ridge.to_vec();
    ridges.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));

    let d = x.dim();
    let mut sweep = Vec::with_capacity(bandwidths.len() * ridges.len());
    let mut best: Option<(f64, KernelModel)> = None;
    let mut prediction = vec![0.0; d];
    for &nu_kernel in &bandwidths {
        let shared_gram = gram(x, nu_kernel)?;
        for &nu_ridge in &ridges {
            let params = KernelParams::new(nu_kernel, nu_ridge)?;
            let model = fit_with_gram(x, &shared_gram, ytilde, params)?;
            let mut sse = 0.0;
            for (query, truth) in holdout_x.iter().zip(holdout_truth.iter()) {
                model.predict_into(query, &mut prediction)?;
                sse += squared_distance(&prediction, truth);
            }
            let mse = sse / holdout_x.len() as f64;
            if !mse.is_finite() {
                return Err(Error::numeric("parameter sweep", "non-finite holdout error"));
            }
            sweep.push(SweepEntry {
                params,
                holdout_mse: mse,
            });
            // Strict improvement wins; the ascending sweep order makes
            // first-wins equivalent to the lexicographic tie rule.
            let improves = match &best {
                None => true,
                Some((best_mse, _)) => mse < *best_mse,
            };
            if improves {
                best = Some((mse, model));
            }
        }
    }

    let (_, model) = best.expect("non-empty grids produce at least one fit");
    Ok(OracleSelection {
        params: *model.params(),
        model,
        sweep,
    })
}
