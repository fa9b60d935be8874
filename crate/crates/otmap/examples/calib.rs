//! Calibration probe: time wavelet fits under different iteration budgets.
//! Usage: calib <problem> <d> <n> <grid_n> <max_iters> <memory> <scale...>

use std::time::Instant;

use otmap::harness::{derive_seed, mse};
use otmap::semidual::{fit_wavelet_oracle, OptimizerOptions, WaveletFitConfig};
use otmap::synthetic::{pushforward_sample, sample_source, TestProblem};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family = args[0].as_str();
    let d: usize = args[1].parse().unwrap();
    let n: usize = args[2].parse().unwrap();
    let grid_n: usize = args[3].parse().unwrap();
    let max_iters: usize = args[4].parse().unwrap();
    let memory: usize = args[5].parse().unwrap();
    let quad_n: usize = args[6].parse().unwrap();
    let scales: Vec<usize> = args[7..].iter().map(|s| s.parse().unwrap()).collect();

    let problem = match family {
        "id" => TestProblem::identity(d).unwrap(),
        "exp" => TestProblem::exponential(d).unwrap(),
        other => panic!("unknown problem {other}"),
    };
    let x = sample_source(&problem, n, derive_seed(1, n, 0, 0)).unwrap();
    let xp = sample_source(&problem, n, derive_seed(1, n, 0, 1)).unwrap();
    let y = pushforward_sample(&problem, &xp).unwrap();

    let config = WaveletFitConfig {
        grid_n,
        envelope: true,
        optimizer: OptimizerOptions {
            max_iters,
            memory,
            ..OptimizerOptions::default()
        },
        ..WaveletFitConfig::default()
    };
    let start = Instant::now();
    let (model, scores) =
        fit_wavelet_oracle(&x, &y, &problem, &config, Some(&scales), quad_n).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = mse(&model, &problem, &x).unwrap();
    println!(
        "d={d} n={n} grid_n={grid_n} max_iters={max_iters} mem={memory} scales={scales:?} -> params={} mse={err:.6} wall={secs:.1}s scores={:?}",
        model.params_label(),
        scores
            .iter()
            .map(|s| (s.scale, (s.objective * 1e4).round() / 1e4))
            .collect::<Vec<_>>()
    );
}
