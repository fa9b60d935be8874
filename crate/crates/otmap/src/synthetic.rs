//! Synthetic transport problems with known ground truth.
//!
//! Each problem fixes a convex potential `f0` on the unit cube whose
//! gradient `T0` is the optimal map from `P = Unif([0,1]^d)` onto the
//! pushforward target distribution. Three families are provided:
//!
//! * **identity** — `f0(x) = |x|^2 / 2`, so `T0` is the identity and the
//!   target equals the source;
//! * **exponential** — `f0(x) = sum_i exp(x_i)`, a coordinate-wise
//!   exponential warp onto `[1, e]^d`;
//! * **bump** — the quadratic potential perturbed by compactly supported
//!   smooth bumps on an `m`-per-axis cell grid, with sign pattern `tau` and
//!   amplitude `kappa` small enough that the Hessian stays within `[1/2, 2]`
//!   so the gradient remains a bijection of the unit cube.
//!
//! The module also provides seeded samplers, pushforward data generation,
//! and the change-of-variables density of the target distribution.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{determinant, lu_factor, lu_solve, symmetric_eigenvalues};
use crate::samples::SampleSet;
use crate::{Bounds, Error, Result};

/// Probe resolution per axis when validating bump Hessian bounds.
const HESSIAN_PROBE_NODES: usize = 33;

/// Largest dimension accepted for bump problems; the Hessian probe
/// enumerates a full `33^d` grid.
const MAX_BUMP_DIM: usize = 4;

/// Convergence tolerance for the damped Newton inversion of the map.
const NEWTON_TOL: f64 = 1e-12;

/// Maximum damped Newton iterations when inverting the map.
const NEWTON_MAX_ITERS: usize = 100;

/// Bump-family parameters: an `m`-per-axis cell grid, a boolean activation
/// per cell, and a shared amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    m: usize,
    kappa: f64,
    tau: Vec<bool>,
}

impl BumpSpec {
    /// Cells per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Bump amplitude.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Activation flags, row-major over the `m^d` cells.
    pub fn tau(&self) -> &[bool] {
        &self.tau
    }
}

/// Which ground-truth family a problem belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    /// `f0(x) = |x|^2 / 2`; the map is the identity.
    Identity,
    /// `f0(x) = sum_i exp(x_i)`; the map is coordinate-wise `exp`.
    Exponential,
    /// Quadratic potential plus compactly supported smooth bumps.
    Bump(BumpSpec),
}

/// A synthetic transport problem: source `P = Unif([0,1]^d)`, a convex
/// potential with closed-form gradient and Hessian, and boxes bounding the
/// supports with margin for grid-based estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProblem {
    kind: ProblemKind,
    dim: usize,
    source_box: Bounds,
    target_box: Bounds,
    smoothness: f64,
}

impl TestProblem {
    /// The identity problem in dimension `d`.
    ///
    /// # Errors
    ///
    /// `d` must be at least 1.
    pub fn identity(d: usize) -> Result<Self> {
        Ok(TestProblem {
            kind: ProblemKind::Identity,
            dim: check_dim(d)?,
            source_box: Bounds::cube(-0.5, 1.5, d)?,
            target_box: Bounds::cube(-0.5, 1.5, d)?,
            smoothness: 2.0,
        })
    }

    /// The coordinate-wise exponential problem in dimension `d`.
    ///
    /// # Errors
    ///
    /// `d` must be at least 1.
    pub fn exponential(d: usize) -> Result<Self> {
        Ok(TestProblem {
            kind: ProblemKind::Exponential,
            dim: check_dim(d)?,
            source_box: Bounds::cube(-0.5, 1.5, d)?,
            target_box: Bounds::cube(0.0, 4.0, d)?,
            smoothness: 3.0,
        })
    }

    /// A bump problem on an `m`-per-axis cell grid with amplitude `kappa`.
    ///
    /// `tau` activates individual cells (row-major over the `m^d` cells);
    /// pass `None` to draw a uniformly random activation pattern from
    /// `seed`. The amplitude must keep every Hessian eigenvalue within
    /// `[1/2, 2]`, which is verified on a `33`-per-axis probe of one cell;
    /// the error for an excessive amplitude names the largest admissible
    /// one.
    ///
    /// # Errors
    ///
    /// Requires `1 <= d <= 4`, `m >= 1`, `kappa >= 0` below the admissible
    /// threshold, and `tau` (when given) of length `m^d`.
    pub fn bump(
        d: usize,
        m: usize,
        kappa: f64,
        tau: Option<Vec<bool>>,
        seed: u64,
    ) -> Result<Self> {
        check_dim(d)?;
        if d > MAX_BUMP_DIM {
            return Err(Error::invalid(
                "bump problem",
                "supported only up to dimension 4 (the Hessian probe \
                 enumerates a full per-axis grid)",
            ));
        }
        if m == 0 {
            return Err(Error::invalid("bump cells", "m must be at least 1"));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::invalid(
                "bump amplitude",
                "kappa must be finite and nonnegative",
            ));
        }
        let cells = m.checked_pow(d as u32).ok_or_else(|| {
            Error::invalid("bump cells", "m^d overflows the cell index range")
        })?;
        let tau = match tau {
            Some(tau) => {
                if tau.len() != cells {
                    return Err(Error::DimensionMismatch {
                        context: "bump activation pattern",
                        expected: cells,
                        got: tau.len(),
                    });
                }
                tau
            }
            None => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                (0..cells).map(|_| rng.gen::<bool>()).collect()
            }
        };
        let threshold = bump_kappa_threshold(d, m)?;
        if kappa > threshold {
            return Err(Error::invalid(
                "bump amplitude",
                format!(
                    "kappa {kappa} violates the Hessian bounds; the largest \
                     admissible amplitude for d={d}, m={m} is {threshold:.6e}"
                ),
            ));
        }
        Ok(TestProblem {
            kind: ProblemKind::Bump(BumpSpec { m, kappa, tau }),
            dim: d,
            source_box: Bounds::cube(-0.5, 1.5, d)?,
            target_box: Bounds::cube(-0.5, 1.5, d)?,
            smoothness: 2.0,
        })
    }

    /// Which family this problem belongs to.
    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    /// Short family label: `id`, `exp`, or `bump`.
    pub fn name(&self) -> &'static str {
        match self.kind {
            ProblemKind::Identity => "id",
            ProblemKind::Exponential => "exp",
            ProblemKind::Bump(_) => "bump",
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Box on which grid-based estimators represent the potential.
    pub fn source_box(&self) -> &Bounds {
        &self.source_box
    }

    /// Box bounding the target support with margin.
    pub fn target_box(&self) -> &Bounds {
        &self.target_box
    }

    /// Curvature bound `M`: every Hessian eigenvalue of the potential lies
    /// in `[1/M, M]` over the unit cube.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Ground-truth potential at `x`.
    ///
    /// # Errors
    ///
    /// `x` must have the problem dimension.
    pub fn f0(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(match &self.kind {
            ProblemKind::Identity => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            ProblemKind::Exponential => x.iter().map(|v| v.exp()).sum(),
            ProblemKind::Bump(spec) => {
                let quadratic = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
                quadratic + bump_perturbation(spec, x)
            }
        })
    }

    /// Ground-truth map `T0 = grad f0` at `x`, written into `out`.
    ///
    /// # Errors
    ///
    /// `x` and `out` must have the problem dimension.
    pub fn t0_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "map output dimension",
                expected: self.dim,
                got: out.len(),
            });
        }
        match &self.kind {
            ProblemKind::Identity => out.copy_from_slice(x),
            ProblemKind::Exponential => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v.exp();
                }
            }
            ProblemKind::Bump(spec) => {
                out.copy_from_slice(x);
                bump_gradient_add(spec, x, out);
            }
        }
        Ok(())
    }

    /// Ground-truth map `T0 = grad f0` at `x`.
    ///
    /// # Errors
    ///
    /// `x` must have the problem dimension.
    pub fn t0(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.t0_into(x, &mut out)?;
        Ok(out)
    }

    /// Hessian of the potential at `x`, written row-major into `out`
    /// (`d x d`).
    ///
    /// # Errors
    ///
    /// `x` must have the problem dimension and `out` length `d * d`.
    pub fn hessian_f0_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        let d = self.dim;
        if out.len() != d * d {
            return Err(Error::DimensionMismatch {
                context: "hessian output length",
                expected: d * d,
                got: out.len(),
            });
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            ProblemKind::Identity => {
                for k in 0..d {
                    out[k * d + k] = 1.0;
                }
            }
            ProblemKind::Exponential => {
                for k in 0..d {
                    out[k * d + k] = x[k].exp();
                }
            }
            ProblemKind::Bump(spec) => {
                for k in 0..d {
                    out[k * d + k] = 1.0;
                }
                bump_hessian_add(spec, x, out);
            }
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "problem point dimension",
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn check_dim(d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::invalid("problem dimension", "must be at least 1"));
    }
    Ok(d)
}

/// Draws `n` independent uniform points on the unit cube from a seeded,
/// reproducible generator.
///
/// # Errors
///
/// `n` must be at least 1.
pub fn sample_source(problem: &TestProblem, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::invalid("sample count", "must be at least 1"));
    }
    let d = problem.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let flat: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
    SampleSet::new(d, flat)
}

/// Applies the ground-truth map to every point of `x`, producing a sample
/// from the target distribution when `x` is drawn from the source.
///
/// # Errors
///
/// `x` must have the problem dimension.
pub fn pushforward_sample(problem: &TestProblem, x: &SampleSet) -> Result<SampleSet> {
    let d = problem.dim();
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "pushforward input dimension",
            expected: d,
            got: x.dim(),
        });
    }
    let mut flat = vec![0.0; x.len() * d];
    for (point, out) in x.iter().zip(flat.chunks_mut(d)) {
        problem.t0_into(point, out)?;
    }
    SampleSet::new(d, flat)
}

/// Largest bump amplitude keeping every Hessian eigenvalue of the potential
/// within `[1/2, 2]`, probed on a `33`-per-axis grid of one active cell.
///
/// The perturbation is linear in the amplitude and cells do not overlap, so
/// probing a single cell bounds every instance with any activation pattern.
///
/// # Errors
///
/// Requires `1 <= d <= 4` and `m >= 1`.
pub fn bump_kappa_threshold(d: usize, m: usize) -> Result<f64> {
    check_dim(d)?;
    if d > MAX_BUMP_DIM {
        return Err(Error::invalid(
            "bump problem",
            "supported only up to dimension 4",
        ));
    }
    if m == 0 {
        return Err(Error::invalid("bump cells", "m must be at least 1"));
    }
    // Eigenvalue range of the unit-amplitude perturbation Hessian
    // m^2 D^2 g(u) over the probe grid.
    let mut lowest = 0.0f64;
    let mut highest = 0.0f64;
    let mut u = vec![0.0; d];
    let mut hessian = vec![0.0; d * d];
    let scale = (m * m) as f64;
    let mut index = vec![0usize; d];
    loop {
        for (axis, &k) in index.iter().enumerate() {
            u[axis] = k as f64 / (HESSIAN_PROBE_NODES - 1) as f64;
        }
        profile_hessian(&u, &mut hessian);
        let eigs = symmetric_eigenvalues(&hessian, d);
        lowest = lowest.min(scale * eigs[0]);
        highest = highest.max(scale * eigs[d - 1]);
        // Odometer over the probe grid.
        let mut axis = d;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < HESSIAN_PROBE_NODES {
                break;
            }
            index[axis] = 0;
        }
        if index.iter().all(|&k| k == 0) {
            break;
        }
    }
    // Eigenvalues of the full Hessian are 1 + kappa * (probe eigenvalue);
    // keep them at or above 1/2 and at or below 2.
    let mut threshold = f64::INFINITY;
    if lowest < 0.0 {
        threshold = threshold.min(0.5 / (-lowest));
    }
    if highest > 0.0 {
        threshold = threshold.min(1.0 / highest);
    }
    Ok(threshold)
}

/// Density of the target distribution at `y` by the change-of-variables
/// formula: `1 / det D^2 f0(x*)` where `T0(x*) = y`.
///
/// The preimage is found by damped Newton iteration, globally convergent
/// here because the potential's Hessian eigenvalues are bounded away from
/// zero.
///
/// # Errors
///
/// `y` must have the problem dimension and lie in the target support (the
/// image of the unit cube); Newton non-convergence is reported as a numeric
/// error.
pub fn monge_ampere_density(problem: &TestProblem, y: &[f64]) -> Result<f64> {
    let d = problem.dim();
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            context: "density point dimension",
            expected: d,
            got: y.len(),
        });
    }
    // Start from y clamped into the unit cube; for all three families the
    // map is a monotone bijection near it.
    let mut x: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut map = vec![0.0; d];
    let mut residual = vec![0.0; d];
    let mut step = vec![0.0; d];
    let mut hessian = vec![0.0; d * d];
    let mut piv = vec![0usize; d];
    let scale = 1.0 + y.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITERS {
        problem.t0_into(&x, &mut map)?;
        for k in 0..d {
            residual[k] = map[k] - y[k];
        }
        let norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= NEWTON_TOL * scale {
            converged = true;
            break;
        }
        problem.hessian_f0_into(&x, &mut hessian)?;
        let mut lu = hessian.clone();
        lu_factor(&mut lu, d, &mut piv)
            .map_err(|_| Error::numeric("map inversion", "singular Hessian"))?;
        step.copy_from_slice(&residual);
        lu_solve(&lu, d, &piv, &mut step);
        // Damped update: halve until the residual norm decreases.
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..d).map(|k| x[k] - t * step[k]).collect();
            problem.t0_into(&trial, &mut map)?;
            let trial_norm = (0..d)
                .map(|k| (map[k] - y[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            if trial_norm < norm || t < 1e-4 {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        return Err(Error::numeric(
            "map inversion",
            "damped Newton did not converge within 100 iterations",
        ));
    }
    for (axis, &v) in x.iter().enumerate() {
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return Err(Error::OutOfDomain {
                axis,
                value: y[axis],
                lower: 0.0,
                upper: 1.0,
            });
        }
    }
    problem.hessian_f0_into(&x, &mut hessian)?;
    let det = determinant(&hessian, d);
    if det <= 0.0 {
        return Err(Error::numeric("density", "non-positive Jacobian determinant"));
    }
    Ok(1.0 / det)
}

/// Serializable reference to a problem: family name plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ProblemConfig {
    /// Identity problem.
    Id {
        /// Ambient dimension.
        d: usize,
    },
    /// Coordinate-wise exponential problem.
    Exp {
        /// Ambient dimension.
        d: usize,
    },
    /// Bump-perturbed quadratic problem.
    Bump {
        /// Ambient dimension.
        d: usize,
        /// Cells per axis.
        m: usize,
        /// Bump amplitude.
        kappa: f64,
        /// Explicit activation pattern; drawn from `seed` when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<Vec<bool>>,
        /// Seed for a random activation pattern.
        #[serde(default)]
        seed: u64,
    },
}

impl ProblemConfig {
    /// Family label: `id`, `exp`, or `bump`.
    pub fn label(&self) -> &'static str {
        match self {
            ProblemConfig::Id { .. } => "id",
            ProblemConfig::Exp { .. } => "exp",
            ProblemConfig::Bump { .. } => "bump",
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            ProblemConfig::Id { d } | ProblemConfig::Exp { d } => *d,
            ProblemConfig::Bump { d, .. } => *d,
        }
    }

    /// Builds the problem this configuration references.
    ///
    /// # Errors
    ///
    /// Same conditions as the corresponding constructor.
    pub fn build(&self) -> Result<TestProblem> {
        match self {
            ProblemConfig::Id { d } => TestProblem::identity(*d),
            ProblemConfig::Exp { d } => TestProblem::exponential(*d),
            ProblemConfig::Bump {
                d,
                m,
                kappa,
                tau,
                seed,
            } => TestProblem::bump(*d, *m, *kappa, tau.clone(), *seed),
        }
    }
}

// --- Bump profile -----------------------------------------------------

/// Smooth compactly supported profile on `(0, 1)`, normalized to peak 1:
/// `xi(t) = exp(1 - 1 / (1 - (2t-1)^2))`.
///
/// Below `s = 1 - (2t-1)^2` of `1e-3` the value and both derivatives fall
/// under the smallest subnormal, so they are returned as exact zeros; this
/// also keeps the rational exponent from overflowing near the support
/// boundary.
fn profile(t: f64) -> (f64, f64, f64) {
    let r = 2.0 * t - 1.0;
    let s = 1.0 - r * r;
    if s < 1e-3 {
        return (0.0, 0.0, 0.0);
    }
    let value = (1.0 - 1.0 / s).exp();
    let s1 = -4.0 * r; // ds/dt
    let s2 = -8.0; // d^2 s / dt^2
    let phi1 = s1 / (s * s);
    let phi2 = s2 / (s * s) - 2.0 * s1 * s1 / (s * s * s);
    let d1 = value * phi1;
    let d2 = value * (phi2 + phi1 * phi1);
    (value, d1, d2)
}

/// Product profile `g(u) = prod_i xi(u_i)` on the unit cube.
fn profile_product(u: &[f64]) -> f64 {
    u.iter().map(|&t| profile(t).0).product()
}

/// Gradient of the product profile.
fn profile_gradient(u: &[f64], out: &mut [f64]) {
    let d = u.len();
    let parts: Vec<(f64, f64, f64)> = u.iter().map(|&t| profile(t)).collect();
    for i in 0..d {
        let mut acc = parts[i].1;
        for (k, part) in parts.iter().enumerate() {
            if k != i {
                acc *= part.0;
            }
        }
        out[i] = acc;
    }
}

/// Hessian of the product profile, row-major into `out`.
fn profile_hessian(u: &[f64], out: &mut [f64]) {
    let d = u.len();
    let parts: Vec<(f64, f64, f64)> = u.iter().map(|&t| profile(t)).collect();
    for i in 0..d {
        for j in 0..d {
            let mut acc = if i == j {
                parts[i].2
            } else {
                parts[i].1 * parts[j].1
            };
            for (k, part) in parts.iter().enumerate() {
                if k != i && k != j {
                    acc *= part.0;
                }
            }
            out[i * d + j] = acc;
        }
    }
}

/// Index of the cell containing `x`, or `None` when outside the unit cube;
/// cell coordinates are written into `u` scaled to the unit cell.
fn locate_cell(spec: &BumpSpec, x: &[f64], u: &mut [f64]) -> Option<usize> {
    let m = spec.m;
    let mut cell = 0usize;
    for (axis, &v) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return None;
        }
        let scaled = v * m as f64;
        let k = (scaled.floor() as usize).min(m - 1);
        cell = cell * m + k;
        u[axis] = scaled - k as f64;
    }
    Some(cell)
}

/// Bump perturbation value at `x` (zero outside the unit cube and in
/// inactive cells).
fn bump_perturbation(spec: &BumpSpec, x: &[f64]) -> f64 {
    let mut u = vec![0.0; x.len()];
    match locate_cell(spec, x, &mut u) {
        Some(cell) if spec.tau[cell] => spec.kappa * profile_product(&u),
        _ => 0.0,
    }
}

/// Adds the bump perturbation gradient at `x` onto `out`.
fn bump_gradient_add(spec: &BumpSpec, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let mut u = vec![0.0; d];
    if let Some(cell) = locate_cell(spec, x, &mut u) {
        if spec.tau[cell] {
            let mut grad = vec![0.0; d];
            profile_gradient(&u, &mut grad);
            let factor = spec.kappa * spec.m as f64;
            for (o, g) in out.iter_mut().zip(&grad) {
                *o += factor * g;
            }
        }
    }
}

/// Adds the bump perturbation Hessian at `x` onto `out` (row-major).
fn bump_hessian_add(spec: &BumpSpec, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let mut u = vec![0.0; d];
    if let Some(cell) = locate_cell(spec, x, &mut u) {
        if spec.tau[cell] {
            let mut hess = vec![0.0; d * d];
            profile_hessian(&u, &mut hess);
            let factor = spec.kappa * (spec.m * spec.m) as f64;
            for (o, h) in out.iter_mut().zip(&hess) {
                *o += factor * h;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::rngs::StdRng;

    fn problems() -> Vec<TestProblem> {
        let kappa = 0.5 * bump_kappa_threshold(2, 2).unwrap();
        vec![
            TestProblem::identity(2).unwrap(),
            TestProblem::exponential(3).unwrap(),
            TestProblem::bump(2, 2, kappa, None, 7).unwrap(),
        ]
    }

    /// Kolmogorov–Smirnov statistic of samples against a CDF.
    fn ks_statistic(mut values: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len() as f64;
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn map_is_the_finite_difference_gradient_of_the_potential() {
        let mut rng = StdRng::seed_from_u64(1);
        let h = 1e-6;
        for problem in problems() {
            let d = problem.dim();
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..0.95)).collect();
                let t = problem.t0(&x).unwrap();
                for axis in 0..d {
                    let mut hi = x.clone();
                    hi[axis] += h;
                    let mut lo = x.clone();
                    lo[axis] -= h;
                    let fd =
                        (problem.f0(&hi).unwrap() - problem.f0(&lo).unwrap()) / (2.0 * h);
                    assert_abs_diff_eq!(t[axis], fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn map_sends_the_unit_cube_into_the_target_box() {
        let mut rng = StdRng::seed_from_u64(2);
        for problem in problems() {
            let d = problem.dim();
            for _ in 0..200 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                let y = problem.t0(&x).unwrap();
                assert!(problem.target_box().contains(&y), "{:?} -> {:?}", x, y);
            }
        }
    }

    #[test]
    fn bump_map_is_a_bijection_of_the_unit_cube() {
        // All-ones activation, d=2, m=2: the closed-form gradient must keep
        // every point of the unit cube inside it.
        let kappa = 0.5 * bump_kappa_threshold(2, 2).unwrap();
        let problem = TestProblem::bump(2, 2, kappa, Some(vec![true; 4]), 0).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            let y = problem.t0(&x).unwrap();
            for &v in &y {
                assert!((0.0..=1.0).contains(&v), "{:?} -> {:?}", x, y);
            }
        }
    }

    #[test]
    fn map_is_monotone() {
        let mut rng = StdRng::seed_from_u64(4);
        for problem in problems() {
            let d = problem.dim();
            for _ in 0..100 {
                let a: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                let b: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                let ta = problem.t0(&a).unwrap();
                let tb = problem.t0(&b).unwrap();
                let inner: f64 = (0..d).map(|k| (ta[k] - tb[k]) * (a[k] - b[k])).sum();
                assert!(inner >= -1e-12, "{inner}");
            }
        }
    }

    #[test]
    fn hessian_eigenvalues_stay_in_the_curvature_band() {
        let mut rng = StdRng::seed_from_u64(5);
        for problem in problems() {
            let d = problem.dim();
            let m = problem.smoothness();
            let mut hessian = vec![0.0; d * d];
            for _ in 0..200 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                problem.hessian_f0_into(&x, &mut hessian).unwrap();
                let eigs = symmetric_eigenvalues(&hessian, d);
                assert!(eigs[0] >= 1.0 / m - 1e-9, "{}", eigs[0]);
                assert!(eigs[d - 1] <= m + 1e-9, "{}", eigs[d - 1]);
            }
        }
    }

    #[test]
    fn source_sampling_is_seeded_and_uniform() {
        let problem = TestProblem::identity(3).unwrap();
        let a = sample_source(&problem, 100, 42).unwrap();
        let b = sample_source(&problem, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_source(&problem, 100, 43).unwrap();
        assert_ne!(a, c);
        assert!(a.flat().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let line = TestProblem::identity(1).unwrap();
        let big = sample_source(&line, 100_000, 7).unwrap();
        let ks = ks_statistic(big.flat().to_vec(), |v| v.clamp(0.0, 1.0));
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn pushforward_matches_the_analytic_target_law() {
        let identity = TestProblem::identity(1).unwrap();
        let x = sample_source(&identity, 100_000, 11).unwrap();
        let y = pushforward_sample(&identity, &x).unwrap();
        assert_eq!(x, y);

        let exponential = TestProblem::exponential(1).unwrap();
        let x = sample_source(&exponential, 100_000, 13).unwrap();
        let y = pushforward_sample(&exponential, &x).unwrap();
        let e = std::f64::consts::E;
        assert!(y.flat().iter().all(|&v| (1.0..=e).contains(&v)));
        let ks = ks_statistic(y.flat().to_vec(), |v| v.clamp(1.0, e).ln());
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn zero_amplitude_bump_is_exactly_the_identity_problem() {
        let bump = TestProblem::bump(2, 3, 0.0, None, 5).unwrap();
        let identity = TestProblem::identity(2).unwrap();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            assert_eq!(bump.f0(&x).unwrap(), identity.f0(&x).unwrap());
            assert_eq!(bump.t0(&x).unwrap(), identity.t0(&x).unwrap());
        }
    }

    #[test]
    fn amplitude_threshold_separates_valid_from_invalid_instances() {
        let threshold = bump_kappa_threshold(2, 2).unwrap();
        assert!(threshold > 0.0 && threshold.is_finite());
        assert!(TestProblem::bump(2, 2, 0.9 * threshold, None, 0).is_ok());
        let err = TestProblem::bump(2, 2, 1.1 * threshold, None, 0).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("largest admissible"),
            "unexpected message: {message}"
        );
        assert!(
            message.contains(&format!("{threshold:.6e}")),
            "threshold missing from: {message}"
        );
    }

    #[test]
    fn identity_density_is_one_everywhere() {
        let problem = TestProblem::identity(2).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..20 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen::<f64>()).collect();
            let q = monge_ampere_density(&problem, &y).unwrap();
            assert_relative_eq!(q, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn exponential_density_matches_the_closed_form() {
        // In one dimension the target density is 1/y on [1, e].
        let problem = TestProblem::exponential(1).unwrap();
        for y in [1.0, 1.3, 2.0, std::f64::consts::E] {
            let q = monge_ampere_density(&problem, &[y]).unwrap();
            assert_relative_eq!(q, 1.0 / y, max_relative = 1e-9);
        }
    }

    #[test]
    fn bump_density_is_positive_bounded_and_integrates_to_one() {
        // One bump cell keeps the integrand's high derivatives small enough
        // for the 33-node Simpson rule; the four-cell instance needs a finer
        // grid for the same tolerance.
        let single = TestProblem::bump(
            2,
            1,
            0.5 * bump_kappa_threshold(2, 1).unwrap(),
            Some(vec![true]),
            0,
        )
        .unwrap();
        let grid = crate::Grid::new(Bounds::cube(0.0, 1.0, 2).unwrap(), 33).unwrap();
        let integral = grid.integrate_nodes(|_, point| {
            let q = monge_ampere_density(&single, point).unwrap();
            assert!((0.25..=4.0).contains(&q), "density {q} at {point:?}");
            q
        });
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-3);

        let four_cells = TestProblem::bump(
            2,
            2,
            0.5 * bump_kappa_threshold(2, 2).unwrap(),
            Some(vec![true; 4]),
            0,
        )
        .unwrap();
        let fine = crate::Grid::new(Bounds::cube(0.0, 1.0, 2).unwrap(), 129).unwrap();
        let integral = fine.integrate_nodes(|_, point| {
            monge_ampere_density(&four_cells, point).unwrap()
        });
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn density_rejects_points_outside_the_target_support() {
        let kappa = 0.5 * bump_kappa_threshold(2, 2).unwrap();
        let problem = TestProblem::bump(2, 2, kappa, None, 3).unwrap();
        // Inside the target box but outside the image of the unit cube.
        let err = monge_ampere_density(&problem, &[1.3, 0.5]).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }), "{err}");
    }

    #[test]
    fn problem_config_round_trips_and_builds() {
        let configs = vec![
            ProblemConfig::Id { d: 3 },
            ProblemConfig::Exp { d: 10 },
            ProblemConfig::Bump {
                d: 2,
                m: 2,
                kappa: 0.001,
                tau: None,
                seed: 9,
            },
        ];
        for config in configs {
            let text = serde_json::to_string(&config).unwrap();
            let back: ProblemConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(config, back);
            let problem = config.build().unwrap();
            assert_eq!(problem.name(), config.label());
            assert_eq!(problem.dim(), config.dim());
        }
        let text = r#"{"name":"id","d":2}"#;
        let config: ProblemConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config, ProblemConfig::Id { d: 2 });
    }

    #[test]
    fn invalid_constructions_are_rejected() {
        assert!(TestProblem::identity(0).is_err());
        assert!(TestProblem::bump(5, 2, 0.001, None, 0).is_err());
        assert!(TestProblem::bump(2, 0, 0.001, None, 0).is_err());
        assert!(TestProblem::bump(2, 2, -0.1, None, 0).is_err());
        assert!(TestProblem::bump(2, 2, 0.001, Some(vec![true; 3]), 0).is_err());
        assert!(sample_source(&TestProblem::identity(1).unwrap(), 0, 0).is_err());
    }
}
