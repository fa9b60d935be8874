//! Experiment orchestration: seeded deterministic sweeps over sample sizes
//! and replicates, per-estimator fits with their selection rules, map MSE
//! metrics, median rate regression, CSV persistence, and a log-log SVG plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{default_bandwidth_grid, default_ridge_grid, oracle_select};
use crate::model::TransportMapModel;
use crate::ot::{assign, matching_map, Assignment};
use crate::semidual::{fit_wavelet_oracle, WaveletFitConfig};
use crate::synthetic::{pushforward_sample, sample_source, ProblemConfig, TestProblem};
use crate::{Error, Result, SampleSet};

/// Exact header of the results CSV.
pub const RESULTS_HEADER: &str = "problem,d,n,estimator,params,replicate,seed,mse,wall_ms";

/// Exact header of the rates CSV.
pub const RATES_HEADER: &str = "problem,estimator,slope,intercept,r_squared,points";

fn default_true() -> bool {
    true
}

fn default_grid_n() -> usize {
    65
}

fn default_quad_n() -> usize {
    33
}

/// Per-estimator settings of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorConfig {
    /// Raw empirical matching (exact assignment, values at training points).
    Matching,
    /// Kernel ridge smoothing of the matching map with held-out parameter
    /// selection; omitted grids fall back to the standard half-decade grids.
    Kernel {
        /// Candidate bandwidth parameters.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bandwidth_grid: Option<Vec<f64>>,
        /// Candidate ridge parameters.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ridge_grid: Option<Vec<f64>>,
    },
    /// Grid-potential estimator with population-objective scale selection;
    /// an omitted scale list sweeps every feasible scale.
    Wavelet {
        /// Nodes per axis of the potential grids.
        #[serde(default = "default_grid_n")]
        grid_n: usize,
        /// Candidate truncation scales.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<usize>>,
        /// Convexify fitted potentials before differentiation.
        #[serde(default = "default_true")]
        envelope: bool,
        /// Quadrature nodes per axis of the selection objective.
        #[serde(default = "default_quad_n")]
        quad_n: usize,
        /// Override of the minimizer's iteration cap.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_iters: Option<usize>,
        /// Override of the minimizer's history length.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory: Option<usize>,
    },
}

impl EstimatorConfig {
    /// Estimator name as recorded in result rows: `matching`, `kernel`, or
    /// `wavelet`.
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorConfig::Matching => "matching",
            EstimatorConfig::Kernel { .. } => "kernel",
            EstimatorConfig::Wavelet { .. } => "wavelet",
        }
    }
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Synthetic problem to draw from.
    pub problem: ProblemConfig,
    /// Sample sizes, strictly ascending.
    pub n_list: Vec<usize>,
    /// Independent replicates per sample size.
    pub replicates: usize,
    /// Estimators to fit on every draw.
    pub estimators: Vec<EstimatorConfig>,
    /// Root of the deterministic seed derivation.
    pub base_seed: u64,
    /// Optional output destination recorded in the config (the CLI uses it
    /// as the default results path).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Record measured wall time per fit; disable for byte-identical reruns.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    /// Checks the structural invariants of the configuration.
    ///
    /// # Errors
    ///
    /// Empty or non-ascending sample sizes, zero replicates, no estimators.
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::config("n_list must not be empty"));
        }
        if self.n_list[0] == 0 {
            return Err(Error::config("sample sizes must be at least 1"));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("n_list must be strictly ascending"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("at least one estimator is required"));
        }
        Ok(())
    }
}

/// One fitted-and-scored cell of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Problem family label.
    pub problem: String,
    /// Ambient dimension.
    pub d: usize,
    /// Sample size of this cell.
    pub n: usize,
    /// Estimator name.
    pub estimator: String,
    /// Selected parameters (semicolon-separated), or `error=...` for a
    /// failed fit.
    pub params: String,
    /// Replicate index within the cell.
    pub replicate: usize,
    /// Seed of this replicate's source draw.
    pub seed: u64,
    /// Mean squared map error on the training sample; NaN for failed fits.
    pub mse: f64,
    /// Wall-clock fit time in milliseconds (0 when timing is disabled).
    pub wall_ms: f64,
}

impl PartialEq for ResultRecord {
    fn eq(&self, other: &Self) -> bool {
        self.problem == other.problem
            && self.d == other.d
            && self.n == other.n
            && self.estimator == other.estimator
            && self.params == other.params
            && self.replicate == other.replicate
            && self.seed == other.seed
            && self.mse.total_cmp(&other.mse).is_eq()
            && self.wall_ms.total_cmp(&other.wall_ms).is_eq()
    }
}

/// Least-squares fit of `log10(median mse)` against `log10(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of the regression line (the empirical convergence rate).
    pub slope: f64,
    /// Intercept of the regression line.
    pub intercept: f64,
    /// Coefficient of determination (1 for an exact line).
    pub r_squared: f64,
    /// Sample sizes whose medians entered the fit, ascending.
    pub points_used: Vec<usize>,
}

/// splitmix64 finalizer: the bit mixer behind the seed derivation.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of one random stream of one experiment cell.
///
/// Streams: 0 = source draw, 1 = the independent draw behind the target
/// sample, 2 = the kernel selection holdout draw. The derivation depends
/// only on `(base_seed, n, replicate, stream)`, never on the estimator
/// list, so adding estimators leaves all draws unchanged.
pub fn derive_seed(base_seed: u64, n: usize, replicate: usize, stream: u64) -> u64 {
    let mut h = base_seed ^ 0x9E37_79B9_7F4A_7C15;
    for part in [n as u64, replicate as u64, stream] {
        h = mix64(h.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(part));
    }
    h
}

/// Mean squared Euclidean error of a fitted map against the true map,
/// evaluated at `x_eval`.
///
/// # Errors
///
/// Dimension mismatches, an empty evaluation set, or a point where the
/// model is not evaluable (a matching model off its training sample).
pub fn mse(model: &TransportMapModel, problem: &TestProblem, x_eval: &SampleSet) -> Result<f64> {
    let d = problem.dim();
    if model.dim() != d || x_eval.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "mse evaluation dimension",
            expected: d,
            got: model.dim().min(x_eval.dim()),
        });
    }
    if x_eval.is_empty() {
        return Err(Error::invalid("mse evaluation", "empty evaluation sample"));
    }
    let mut mapped = vec![0.0; d];
    let mut truth = vec![0.0; d];
    let mut sse = 0.0;
    for point in x_eval.iter() {
        model.predict_into(point, &mut mapped)?;
        problem.t0_into(point, &mut truth)?;
        sse += mapped
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(sse / x_eval.len() as f64)
}

/// Fits one estimator on a drawn pair, applying its selection rule.
///
/// `assignment` may carry a precomputed optimal assignment between `x` and
/// `y` (matching and kernel share it inside experiment cells); when absent
/// it is computed on demand. `holdout_seed` seeds the kernel selection
/// holdout draw and is unused by the other estimators.
///
/// # Errors
///
/// Propagates fit failures of the chosen estimator.
pub fn fit_estimator(
    estimator: &EstimatorConfig,
    problem: &TestProblem,
    x: &SampleSet,
    y: &SampleSet,
    assignment: Option<&Assignment>,
    holdout_seed: u64,
) -> Result<TransportMapModel> {
    let owned;
    let resolve_assignment = |slot: &mut Option<Assignment>| -> Result<()> {
        if assignment.is_none() && slot.is_none() {
            *slot = Some(assign(x, y)?);
        }
        Ok(())
    };
    match estimator {
        EstimatorConfig::Matching => {
            let mut slot = None;
            resolve_assignment(&mut slot)?;
            owned = slot;
            let plan = assignment.or(owned.as_ref()).expect("assignment resolved");
            matching_map(plan, x, y)
        }
        EstimatorConfig::Kernel {
            bandwidth_grid,
            ridge_grid,
        } => {
            let mut slot = None;
            resolve_assignment(&mut slot)?;
            owned = slot;
            let plan = assignment.or(owned.as_ref()).expect("assignment resolved");
            let d = x.dim();
            let mut values = Vec::with_capacity(x.len() * d);
            for i in 0..x.len() {
                values.extend_from_slice(y.point(plan.target_of(i)));
            }
            let ytilde = SampleSet::new(d, values)?;
            let holdout_x = sample_source(problem, x.len(), holdout_seed)?;
            let mut truth_values = Vec::with_capacity(holdout_x.len() * d);
            let mut image = vec![0.0; d];
            for point in holdout_x.iter() {
                problem.t0_into(point, &mut image)?;
                truth_values.extend_from_slice(&image);
            }
            let holdout_truth = SampleSet::new(d, truth_values)?;
            let bandwidths = bandwidth_grid
                .clone()
                .unwrap_or_else(default_bandwidth_grid);
            let ridges = ridge_grid.clone().unwrap_or_else(default_ridge_grid);
            let selection = oracle_select(
                x,
                &ytilde,
                &holdout_x,
                &holdout_truth,
                &bandwidths,
                &ridges,
            )?;
            Ok(TransportMapModel::Kernel(selection.model))
        }
        EstimatorConfig::Wavelet {
            grid_n,
            scales,
            envelope,
            quad_n,
            max_iters,
            memory,
        } => {
            let mut config = WaveletFitConfig {
                grid_n: *grid_n,
                envelope: *envelope,
                seed: holdout_seed,
                ..WaveletFitConfig::default()
            };
            if let Some(cap) = max_iters {
                config.optimizer.max_iters = *cap;
            }
            if let Some(m) = memory {
                config.optimizer.memory = *m;
            }
            let (model, _) =
                fit_wavelet_oracle(x, y, problem, &config, scales.as_deref(), *quad_n)?;
            Ok(model)
        }
    }
}

/// Keeps failure text CSV-safe: everything stays on one line and never
/// introduces a field separator.
fn sanitize_params(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            ',' => ';',
            '\n' | '\r' => ' ',
            c => c,
        })
        .collect()
}

/// Runs the full sweep: for every `(n, replicate)` cell, draw the source
/// sample, draw an independent sample and push it through the true map to
/// form the target sample, fit every estimator with its selection rule, and
/// score each fit on the training sample.
///
/// Records come back canonically sorted by `(n, estimator, replicate)` and
/// are identical across reruns and worker schedules for a fixed config with
/// timing disabled. Per-fit failures become flagged records (`params =
/// "error=..."`, `mse = NaN`) instead of aborting the sweep.
///
/// # Errors
///
/// Invalid configuration, an unbuildable problem, or a failed sample draw.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let problem = config.problem.build()?;
    let label = config.problem.label();
    let cells: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |rep| (n, rep)))
        .collect();

    let mut records: Vec<ResultRecord> = cells
        .par_iter()
        .map(|&(n, replicate)| -> Result<Vec<ResultRecord>> {
            let seed_x = derive_seed(config.base_seed, n, replicate, 0);
            let seed_y = derive_seed(config.base_seed, n, replicate, 1);
            let seed_holdout = derive_seed(config.base_seed, n, replicate, 2);
            let x = sample_source(&problem, n, seed_x)?;
            let x_independent = sample_source(&problem, n, seed_y)?;
            let y = pushforward_sample(&problem, &x_independent)?;
            let needs_assignment = config
                .estimators
                .iter()
                .any(|e| !matches!(e, EstimatorConfig::Wavelet { .. }));
            let shared_assignment = if needs_assignment {
                Some(assign(&x, &y)?)
            } else {
                None
            };
            let mut out = Vec::with_capacity(config.estimators.len());
            for estimator in &config.estimators {
                let start = Instant::now();
                let fitted = fit_estimator(
                    estimator,
                    &problem,
                    &x,
                    &y,
                    shared_assignment.as_ref(),
                    seed_holdout,
                )
                .and_then(|model| {
                    let score = mse(&model, &problem, &x)?;
                    Ok((model.params_label(), score))
                });
                let wall_ms = if config.record_wall_time {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                let (params, score) = match fitted {
                    Ok(pair) => pair,
                    Err(e) => (format!("error={}", sanitize_params(&e.to_string())), f64::NAN),
                };
                out.push(ResultRecord {
                    problem: label.to_string(),
                    d: problem.dim(),
                    n,
                    estimator: estimator.name().to_string(),
                    params,
                    replicate,
                    seed: seed_x,
                    mse: score,
                    wall_ms,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<ResultRecord>>>>()?
        .into_iter()
        .flatten()
        .collect();

    records.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then_with(|| a.estimator.cmp(&b.estimator))
            .then_with(|| a.replicate.cmp(&b.replicate))
    });
    Ok(records)
}

/// Median of the finite values in `values`; `None` when none are finite.
fn median_finite(values: &[f64]) -> Option<f64> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    finite.sort_by(f64::total_cmp);
    let mid = finite.len() / 2;
    Some(if finite.len() % 2 == 1 {
        finite[mid]
    } else {
        0.5 * (finite[mid - 1] + finite[mid])
    })
}

/// Median MSE per sample size of one `(problem, estimator)` series,
/// ascending in `n`. Failed fits (non-finite MSE) are skipped; sample sizes
/// whose replicates all failed are omitted.
pub fn median_curve(
    records: &[ResultRecord],
    estimator: &str,
    problem: &str,
) -> Vec<(usize, f64)> {
    let mut sizes: Vec<usize> = records
        .iter()
        .filter(|r| r.estimator == estimator && r.problem == problem)
        .map(|r| r.n)
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut curve = Vec::with_capacity(sizes.len());
    for n in sizes {
        let scores: Vec<f64> = records
            .iter()
            .filter(|r| r.estimator == estimator && r.problem == problem && r.n == n)
            .map(|r| r.mse)
            .collect();
        if let Some(median) = median_finite(&scores) {
            curve.push((n, median));
        }
    }
    curve
}

/// Ordinary least squares of `log10(median mse)` on `log10(n)` for one
/// `(problem, estimator)` series.
///
/// Only sample sizes with a positive finite median enter (logarithms must
/// exist). An exactly constant response yields `r_squared = 1`.
///
/// # Errors
///
/// Fewer than two usable sample sizes.
pub fn fit_rate(records: &[ResultRecord], estimator: &str, problem: &str) -> Result<RateFit> {
    let curve: Vec<(usize, f64)> = median_curve(records, estimator, problem)
        .into_iter()
        .filter(|(_, m)| *m > 0.0)
        .collect();
    if curve.len() < 2 {
        return Err(Error::invalid(
            "rate regression",
            format!(
                "need at least 2 sample sizes with positive medians for \
                 problem={problem} estimator={estimator}, found {}",
                curve.len()
            ),
        ));
    }
    let points: Vec<(f64, f64)> = curve
        .iter()
        .map(|&(n, m)| ((n as f64).log10(), m.log10()))
        .collect();
    let len = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points_used: curve.iter().map(|&(n, _)| n).collect(),
    })
}

/// One row of the rates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// Problem family label.
    pub problem: String,
    /// Estimator name.
    pub estimator: String,
    /// The regression result.
    pub fit: RateFit,
}

/// Fits rates for every `(problem, estimator)` pair present in `records`,
/// skipping pairs with fewer than two usable medians. Rows come back sorted
/// by problem, then estimator.
pub fn fit_all_rates(records: &[ResultRecord]) -> Vec<RateRow> {
    let mut pairs: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.problem.clone(), r.estimator.clone()))
        .collect();
    pairs.sort();
    pairs.dedup();
    pairs
        .into_iter()
        .filter_map(|(problem, estimator)| {
            fit_rate(records, &estimator, &problem)
                .ok()
                .map(|fit| RateRow {
                    problem,
                    estimator,
                    fit,
                })
        })
        .collect()
}

/// Serializes records to CSV under [`RESULTS_HEADER`]. Floats use the
/// shortest round-trip formatting, so NaN markers of failed fits survive a
/// parse cycle.
pub fn records_to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:?},{:?}",
            r.problem,
            r.d,
            r.n,
            r.estimator,
            sanitize_params(&r.params),
            r.replicate,
            r.seed,
            r.mse,
            r.wall_ms
        );
    }
    out
}

/// Parses a results CSV produced by [`records_to_csv`].
///
/// # Errors
///
/// Wrong header, wrong field count, or unparseable numeric fields; messages
/// carry the offending line number.
pub fn records_from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RESULTS_HEADER => {}
        other => {
            return Err(Error::invalid(
                "results csv",
                format!(
                    "expected header {RESULTS_HEADER:?}, found {:?}",
                    other.unwrap_or_default()
                ),
            ));
        }
    }
    let mut records = Vec::new();
    for (index, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = index + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::invalid(
                "results csv",
                format!("line {row}: expected 9 fields, found {}", fields.len()),
            ));
        }
        let parse_usize = |text: &str, what: &str| -> Result<usize> {
            text.parse().map_err(|_| {
                Error::invalid("results csv", format!("line {row}: bad {what}: {text:?}"))
            })
        };
        let parse_f64 = |text: &str, what: &str| -> Result<f64> {
            text.parse().map_err(|_| {
                Error::invalid("results csv", format!("line {row}: bad {what}: {text:?}"))
            })
        };
        records.push(ResultRecord {
            problem: fields[0].to_string(),
            d: parse_usize(fields[1], "dimension")?,
            n: parse_usize(fields[2], "sample size")?,
            estimator: fields[3].to_string(),
            params: fields[4].to_string(),
            replicate: parse_usize(fields[5], "replicate")?,
            seed: fields[6].parse().map_err(|_| {
                Error::invalid(
                    "results csv",
                    format!("line {row}: bad seed: {:?}", fields[6]),
                )
            })?,
            mse: parse_f64(fields[7], "mse")?,
            wall_ms: parse_f64(fields[8], "wall_ms")?,
        });
    }
    Ok(records)
}

/// Serializes rate rows to CSV under [`RATES_HEADER`]; the sample sizes
/// used are semicolon-joined in the last column.
pub fn rates_to_csv(rows: &[RateRow]) -> String {
    let mut out = String::new();
    out.push_str(RATES_HEADER);
    out.push('\n');
    for row in rows {
        let points = row
            .fit
            .points_used
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{}",
            row.problem, row.estimator, row.fit.slope, row.fit.intercept, row.fit.r_squared, points
        );
    }
    out
}

/// Writes `text` to `path`, mapping IO failures to errors naming the path.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::from)
}

const PLOT_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders a log-log MSE-versus-n plot: one median polyline plus a replicate
/// scatter per estimator series, with power-of-ten gridlines and a legend.
///
/// # Errors
///
/// No record with a positive finite MSE to place on log axes.
pub fn plot_svg(records: &[ResultRecord]) -> Result<String> {
    let plottable: Vec<&ResultRecord> = records
        .iter()
        .filter(|r| r.mse.is_finite() && r.mse > 0.0)
        .collect();
    if plottable.is_empty() {
        return Err(Error::invalid(
            "plot",
            "no records with positive finite mse to plot",
        ));
    }
    let mut series: Vec<(String, String)> = plottable
        .iter()
        .map(|r| (r.problem.clone(), r.estimator.clone()))
        .collect();
    series.sort();
    series.dedup();

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &plottable {
        let lx = (r.n as f64).log10();
        let ly = r.mse.log10();
        x_min = x_min.min(lx);
        x_max = x_max.max(lx);
        y_min = y_min.min(ly);
        y_max = y_max.max(ly);
    }
    if x_max - x_min < 1e-9 {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad_x = 0.04 * (x_max - x_min);
    let pad_y = 0.06 * (y_max - y_min);
    x_min -= pad_x;
    x_max += pad_x;
    y_min -= pad_y;
    y_max += pad_y;

    let (width, height) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (64.0, 16.0, 16.0, 48.0);
    let sx = |lx: f64| ml + (lx - x_min) / (x_max - x_min) * (width - ml - mr);
    let sy = |ly: f64| height - mb - (ly - y_min) / (y_max - y_min) * (height - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    );

    // Power-of-ten gridlines and tick labels.
    for k in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let x = sx(k as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{mt}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>",
            height - mb
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{k}</text>",
            height - mb + 16.0
        );
    }
    for k in (y_min.ceil() as i64)..=(y_max.floor() as i64) {
        let y = sy(k as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>",
            width - mr
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{k}</text>",
            ml - 6.0,
            y + 4.0
        );
    }
    // Frame and axis labels.
    let _ = writeln!(
        svg,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#333333\"/>",
        width - ml - mr,
        height - mt - mb
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">n</text>",
        ml + (width - ml - mr) / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {:.1})\">mse</text>",
        mt + (height - mt - mb) / 2.0,
        mt + (height - mt - mb) / 2.0
    );

    for (index, (problem, estimator)) in series.iter().enumerate() {
        let color = PLOT_PALETTE[index % PLOT_PALETTE.len()];
        let scatter: Vec<&&ResultRecord> = plottable
            .iter()
            .filter(|r| r.problem == *problem && r.estimator == *estimator)
            .collect();
        for r in &scatter {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\" \
                 fill-opacity=\"0.35\"/>",
                sx((r.n as f64).log10()),
                sy(r.mse.log10())
            );
        }
        let curve: Vec<(usize, f64)> = median_curve(records, estimator, problem)
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .collect();
        let points = curve
            .iter()
            .map(|&(n, m)| format!("{:.1},{:.1}", sx((n as f64).log10()), sy(m.log10())))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            svg,
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"2\" data-series=\"{problem}/{estimator}\"/>"
        );
        // Legend entry.
        let ly = mt + 14.0 + 18.0 * index as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            width - mr - 150.0,
            ly - 10.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{ly:.1}\">{problem}/{estimator}</text>",
            width - mr - 134.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
