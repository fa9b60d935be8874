//! Command-line front end: generate synthetic draws, fit and evaluate the
//! three map estimators, run seeded experiment sweeps, regress rates, plot,
//! and certify fitted potentials.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use otmap::harness::{
    derive_seed, fit_all_rates, fit_estimator, mse, plot_svg, rates_to_csv, records_from_csv,
    records_to_csv, run_experiment, EstimatorConfig, ExperimentConfig,
};
use otmap::semidual::stability_certificate;
use otmap::synthetic::{pushforward_sample, sample_source, ProblemConfig};
use otmap::{
    one_nn_extend, Bounds, Error, Grid, Result, SampleSet, ScalarField, TransportMapModel,
};

/// Estimation of smooth transport maps between sampled distributions.
#[derive(Parser)]
#[command(name = "otmap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a source sample and an independent pushforward target sample.
    Gen(GenArgs),
    /// Fit one estimator on a generated data file.
    Fit(FitArgs),
    /// Score a fitted model against the true map on a data file's sample.
    Eval(EvalArgs),
    /// Run a full seeded sweep from a JSON config.
    Experiment(ExperimentArgs),
    /// Regress log-log convergence rates from a results CSV.
    Rates(RatesArgs),
    /// Render a log-log SVG plot from a results CSV.
    Plot(PlotArgs),
    /// Check the two-sided stability certificate of a fitted potential.
    Certify(CertifyArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ProblemName {
    Id,
    Exp,
    Bump,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EstimatorName {
    Matching,
    Kernel,
    Wavelet,
}

#[derive(Args)]
struct GenArgs {
    /// Problem family.
    #[arg(long, value_enum)]
    problem: ProblemName,
    /// Ambient dimension.
    #[arg(long)]
    d: usize,
    /// Sample size (source and target).
    #[arg(long)]
    n: usize,
    /// Base seed of the draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bump problems: frequency index per axis.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Bump problems: perturbation amplitude.
    #[arg(long, default_value_t = 1e-3)]
    kappa: f64,
    /// Bump problems: seed of the random sign pattern.
    #[arg(long, default_value_t = 0)]
    bump_seed: u64,
    /// Destination of the JSON data file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Data file produced by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// Estimator to fit.
    #[arg(long, value_enum)]
    estimator: EstimatorName,
    /// Destination of the JSON model file.
    #[arg(long)]
    out: PathBuf,
    /// Matching: extend the fitted map off-sample by nearest neighbor.
    #[arg(long)]
    extend: bool,
    /// Kernel: fixed bandwidth parameter (default: select over a grid).
    #[arg(long)]
    nu_kernel: Option<f64>,
    /// Kernel: fixed ridge parameter (default: select over a grid).
    #[arg(long)]
    nu_ridge: Option<f64>,
    /// Wavelet: nodes per axis of the potential grid.
    #[arg(long, default_value_t = 65)]
    grid_n: usize,
    /// Wavelet: fixed truncation scale (default: sweep every feasible one).
    #[arg(long)]
    scale: Option<usize>,
    /// Wavelet: differentiate the raw potential without convexification.
    #[arg(long)]
    no_envelope: bool,
    /// Wavelet: quadrature nodes per axis of the scale-selection objective.
    #[arg(long, default_value_t = 33)]
    quad_n: usize,
    /// Wavelet: override of the minimizer's iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wavelet: override of the minimizer's history length.
    #[arg(long)]
    memory: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Fitted model file.
    #[arg(long)]
    model: PathBuf,
    /// Data file whose source sample is the evaluation set.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv (default: the config's output path
    /// is used as the results file).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    /// Results CSV produced by `experiment`.
    #[arg(long)]
    results: PathBuf,
    /// Destination CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV produced by `experiment`.
    #[arg(long)]
    results: PathBuf,
    /// Destination SVG (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Fitted model file (must hold a grid potential).
    #[arg(long)]
    model: PathBuf,
    /// Data file naming the problem the model was fitted on.
    #[arg(long)]
    data: PathBuf,
    /// Quadrature nodes per axis of the certificate integrals.
    #[arg(long, default_value_t = 33)]
    quad_n: usize,
}

/// On-disk payload of `gen`: the problem plus one matched pair of samples.
#[derive(Serialize, Deserialize)]
struct DataSet {
    problem: ProblemConfig,
    seed: u64,
    x: SampleSet,
    y: SampleSet,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(what, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(what, format!("cannot parse {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T, what: &'static str) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(what, format!("cannot serialize: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::invalid(what, format!("cannot write {}: {e}", path.display())))
}

fn write_or_print(out: Option<&Path>, text: &str, what: &'static str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::invalid(what, format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_gen(args: GenArgs) -> Result<()> {
    let problem_config = match args.problem {
        ProblemName::Id => ProblemConfig::Id { d: args.d },
        ProblemName::Exp => ProblemConfig::Exp { d: args.d },
        ProblemName::Bump => ProblemConfig::Bump {
            d: args.d,
            m: args.m,
            kappa: args.kappa,
            tau: None,
            seed: args.bump_seed,
        },
    };
    let problem = problem_config.build()?;
    let x = sample_source(&problem, args.n, derive_seed(args.seed, args.n, 0, 0))?;
    let independent = sample_source(&problem, args.n, derive_seed(args.seed, args.n, 0, 1))?;
    let y = pushforward_sample(&problem, &independent)?;
    write_json(
        &args.out,
        &DataSet {
            problem: problem_config,
            seed: args.seed,
            x,
            y,
        },
        "data file",
    )
}

fn run_fit(args: FitArgs) -> Result<()> {
    let data: DataSet = read_json(&args.data, "data file")?;
    let problem = data.problem.build()?;
    let estimator = match args.estimator {
        EstimatorName::Matching => EstimatorConfig::Matching,
        EstimatorName::Kernel => EstimatorConfig::Kernel {
            bandwidth_grid: args.nu_kernel.map(|v| vec![v]),
            ridge_grid: args.nu_ridge.map(|v| vec![v]),
        },
        EstimatorName::Wavelet => EstimatorConfig::Wavelet {
            grid_n: args.grid_n,
            scales: args.scale.map(|j| vec![j]),
            envelope: !args.no_envelope,
            quad_n: args.quad_n,
            max_iters: args.max_iters,
            memory: args.memory,
        },
    };
    let holdout_seed = derive_seed(data.seed, data.x.len(), 0, 2);
    let mut model = fit_estimator(&estimator, &problem, &data.x, &data.y, None, holdout_seed)?;
    if args.extend {
        model = one_nn_extend(&model)?;
    }
    write_json(&args.out, &model, "model file")
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let model: TransportMapModel = read_json(&args.model, "model file")?;
    let data: DataSet = read_json(&args.data, "data file")?;
    let problem = data.problem.build()?;
    let score = mse(&model, &problem, &data.x)?;
    println!("{}", serde_json::json!({ "mse": score }));
    Ok(())
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<()> {
    let config: ExperimentConfig = read_json(&args.config, "experiment config")?;
    let records = run_experiment(&config)?;
    let results_path = match (&args.out, &config.output) {
        (Some(dir), _) => {
            std::fs::create_dir_all(dir).map_err(|e| {
                Error::invalid(
                    "experiment output",
                    format!("cannot create {}: {e}", dir.display()),
                )
            })?;
            dir.join("results.csv")
        }
        (None, Some(path)) => path.clone(),
        (None, None) => {
            return Err(Error::config(
                "no output destination: pass --out or set `output` in the config",
            ));
        }
    };
    std::fs::write(&results_path, records_to_csv(&records)).map_err(|e| {
        Error::invalid(
            "experiment output",
            format!("cannot write {}: {e}", results_path.display()),
        )
    })?;
    eprintln!(
        "wrote {} records to {}",
        records.len(),
        results_path.display()
    );
    Ok(())
}

fn run_rates(args: RatesArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.results).map_err(|e| {
        Error::invalid(
            "results csv",
            format!("cannot read {}: {e}", args.results.display()),
        )
    })?;
    let records = records_from_csv(&text)?;
    let rows = fit_all_rates(&records);
    if rows.is_empty() {
        return Err(Error::invalid(
            "rate regression",
            "no (problem, estimator) series has enough usable medians",
        ));
    }
    write_or_print(args.out.as_deref(), &rates_to_csv(&rows), "rates csv")
}

fn run_plot(args: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.results).map_err(|e| {
        Error::invalid(
            "results csv",
            format!("cannot read {}: {e}", args.results.display()),
        )
    })?;
    let records = records_from_csv(&text)?;
    write_or_print(args.out.as_deref(), &plot_svg(&records)?, "plot svg")
}

fn run_certify(args: CertifyArgs) -> Result<()> {
    let model: TransportMapModel = read_json(&args.model, "model file")?;
    let data: DataSet = read_json(&args.data, "data file")?;
    let problem = data.problem.build()?;
    let wavelet = model.as_wavelet().ok_or_else(|| {
        Error::invalid(
            "certify",
            format!(
                "certificates apply to grid-potential models, got kind {:?}",
                model.kind_name()
            ),
        )
    })?;
    let grid = wavelet.grid();
    let mut reference_values = Vec::with_capacity(grid.node_count());
    let mut node = vec![0.0; grid.dim()];
    for flat in 0..grid.node_count() {
        grid.node_point(flat, &mut node);
        reference_values.push(problem.f0(&node)?);
    }
    let reference = ScalarField::new(grid.clone(), reference_values)?;
    let quad_grid = Grid::new(Bounds::cube(0.0, 1.0, problem.dim())?, args.quad_n)?;
    let density = ScalarField::new(quad_grid, vec![1.0; args.quad_n.pow(problem.dim() as u32)])?;
    let conjugate_grid = Grid::new(problem.target_box().clone(), grid.n())?;
    let report = stability_certificate(
        wavelet.potential(),
        &reference,
        &density,
        problem.smoothness(),
        &problem,
        &conjugate_grid,
    )?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Fit(args) => run_fit(args),
        Command::Eval(args) => run_eval(args),
        Command::Experiment(args) => run_experiment_cmd(args),
        Command::Rates(args) => run_rates(args),
        Command::Plot(args) => run_plot(args),
        Command::Certify(args) => run_certify(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
