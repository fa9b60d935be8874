//! Representation-floor probe: project the true potential onto each
//! truncation scale, envelope, differentiate, and score against the true
//! map — the noiseless best case for the grid estimator.
//! Usage: floor <problem> <d> <grid_n> <n_eval>

use otmap::harness::{derive_seed, mse};
use otmap::legendre::convex_envelope_via;
use otmap::model::{TransportMapModel, WaveletFitMeta, WaveletModel};
use otmap::synthetic::{sample_source, TestProblem};
use otmap::wavelet::Transform;
use otmap::{Grid, ScalarField};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let problem = match args[0].as_str() {
        "id" => TestProblem::identity(args[1].parse().unwrap()).unwrap(),
        "exp" => TestProblem::exponential(args[1].parse().unwrap()).unwrap(),
        other => panic!("unknown problem {other}"),
    };
    let d = problem.dim();
    let grid_n: usize = args[2].parse().unwrap();
    let n_eval: usize = args[3].parse().unwrap();

    let grid = Grid::new(problem.source_box().clone(), grid_n).unwrap();
    let mut values = Vec::with_capacity(grid.node_count());
    let mut node = vec![0.0; d];
    for flat in 0..grid.node_count() {
        grid.node_point(flat, &mut node);
        values.push(problem.f0(&node).unwrap());
    }
    let field = ScalarField::new(grid.clone(), values).unwrap();
    let transform = Transform::new(grid_n).unwrap();
    let coeffs = transform.analyze(&field, transform.depth()).unwrap();
    let x = sample_source(&problem, n_eval, derive_seed(1, n_eval, 0, 0)).unwrap();
    let grid_y = Grid::new(problem.target_box().clone(), grid_n).unwrap();

    for scale in 0..=transform.depth() {
        let truncated = coeffs.truncate(scale).unwrap();
        let back = transform.synthesize(&truncated, grid.bounds()).unwrap();
        for (label, potential) in [
            ("raw", back.clone()),
            ("env", convex_envelope_via(&back, &grid_y).unwrap()),
        ] {
            let map = potential.gradient();
            let meta = WaveletFitMeta {
                scale,
                iters: 0,
                objective_trace: Vec::new(),
                seed: 0,
                line_search_failed: false,
                envelope: label == "env",
            };
            let model =
                TransportMapModel::Wavelet(WaveletModel::new(potential, map, meta).unwrap());
            let err = mse(&model, &problem, &x).unwrap();
            println!(
                "{} d={d} N={grid_n} J={scale} {label}: floor mse = {err:.6}",
                args[0]
            );
        }
    }
}
