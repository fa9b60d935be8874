//! Randomized invariant checks over the core numerical primitives.

use proptest::prelude::*;

use otmap::harness::{derive_seed, records_from_csv, records_to_csv, ResultRecord};
use otmap::kernel::{self, KernelParams};
use otmap::legendre::legendre_d;
use otmap::semidual::SemidualProblem;
use otmap::wavelet::Transform;
use otmap::{assign, matching_map, Bounds, Grid, SampleSet, ScalarField};

fn points_in(lower: f64, upper: f64, n: usize, d: usize) -> impl Strategy<Value = SampleSet> {
    prop::collection::vec(lower..upper, n * d)
        .prop_map(move |values| SampleSet::new(d, values).expect("valid points"))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn pairing_cost(x: &SampleSet, y: &SampleSet, sigma: impl Fn(usize) -> usize) -> f64 {
    (0..x.len())
        .map(|i| squared_distance(x.point(i), y.point(sigma(i))))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assignment_is_a_permutation_no_worse_than_trivial_pairings(
        n in 1usize..=7,
        d in 1usize..=3,
        seed_values in prop::collection::vec(-0.45f64..1.45, 7 * 3 * 2),
    ) {
        let x = SampleSet::new(d, seed_values[..n * d].to_vec()).unwrap();
        let y = SampleSet::new(d, seed_values[7 * 3..7 * 3 + n * d].to_vec()).unwrap();
        let plan = assign(&x, &y).unwrap();
        // Bijectivity: the targets are a permutation of 0..n.
        let mut targets: Vec<usize> = (0..n).map(|i| plan.target_of(i)).collect();
        targets.sort_unstable();
        prop_assert_eq!(targets, (0..n).collect::<Vec<_>>());
        // Optimality against two easily constructed competitors.
        let cost = pairing_cost(&x, &y, |i| plan.target_of(i));
        prop_assert!(cost <= pairing_cost(&x, &y, |i| i) + 1e-12);
        prop_assert!(cost <= pairing_cost(&x, &y, |i| n - 1 - i) + 1e-12);
        // The fitted matching model reproduces the assigned targets exactly.
        let model = matching_map(&plan, &x, &y).unwrap();
        let mut out = vec![0.0; d];
        for i in 0..n {
            model.predict_into(x.point(i), &mut out).unwrap();
            prop_assert_eq!(&out[..], y.point(plan.target_of(i)));
        }
    }

    #[test]
    fn discrete_conjugate_satisfies_the_fenchel_inequality(
        d in 1usize..=2,
        values in prop::collection::vec(-3.0f64..3.0, 81),
        n_index in 0usize..=1,
    ) {
        let n = [5, 9][n_index];
        let grid = Grid::new(Bounds::cube(-0.5, 1.5, d).unwrap(), n).unwrap();
        let field = ScalarField::new(grid.clone(), values[..n.pow(d as u32)].to_vec()).unwrap();
        let slopes = Grid::new(Bounds::cube(0.0, 1.0, d).unwrap(), n).unwrap();
        let conjugate = legendre_d(&field, &slopes).unwrap();
        let mut y = vec![0.0; d];
        let mut x = vec![0.0; d];
        for flat_y in 0..slopes.node_count() {
            slopes.node_point(flat_y, &mut y);
            let star = conjugate.values().values()[flat_y];
            // Upper envelope: no source node beats the reported maximum.
            for flat_x in 0..grid.node_count() {
                grid.node_point(flat_x, &mut x);
                let inner: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                prop_assert!(inner - field.values()[flat_x] <= star + 1e-10);
            }
            // Tightness: the recorded maximizer attains it.
            grid.node_point(conjugate.argmax(flat_y), &mut x);
            let inner: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let attained = inner - field.values()[conjugate.argmax(flat_y)];
            prop_assert!((attained - star).abs() <= 1e-10);
        }
    }

    #[test]
    fn wavelet_round_trip_reconstructs_any_field(
        n_index in 0usize..=2,
        d in 1usize..=2,
        raw in prop::collection::vec(-5.0f64..5.0, 33 * 33),
    ) {
        let n = [9, 17, 33][n_index];
        let bounds = Bounds::cube(-0.5, 1.5, d).unwrap();
        let grid = Grid::new(bounds.clone(), n).unwrap();
        let field = ScalarField::new(grid, raw[..n.pow(d as u32)].to_vec()).unwrap();
        let transform = Transform::new(n).unwrap();
        let coeffs = transform.analyze(&field, transform.depth()).unwrap();
        let back = transform.synthesize(&coeffs, &bounds).unwrap();
        for (a, b) in field.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        // Truncation keeps a prefix of the flattened coefficients.
        let flat = coeffs.flatten();
        for scale in 0..=transform.depth() {
            let truncated = coeffs.truncate(scale).unwrap().flatten();
            prop_assert_eq!(&flat[..truncated.len()], &truncated[..]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semidual_objective_is_convex_with_valid_subgradients(
        x_raw in prop::collection::vec(-0.45f64..1.45, 5),
        y_raw in prop::collection::vec(0.05f64..0.95, 5),
        ga in prop::collection::vec(-1.0f64..1.0, 9),
        gb in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let x = SampleSet::new(1, x_raw).unwrap();
        let y = SampleSet::new(1, y_raw).unwrap();
        let grid_x = Grid::new(Bounds::cube(-0.5, 1.5, 1).unwrap(), 9).unwrap();
        let grid_y = Grid::new(Bounds::cube(0.0, 1.0, 1).unwrap(), 9).unwrap();
        let problem = SemidualProblem::new(x, y, grid_x, grid_y, 0).unwrap();
        prop_assert_eq!(problem.gamma_len(), 9);
        let mid: Vec<f64> = ga.iter().zip(&gb).map(|(a, b)| 0.5 * (a + b)).collect();
        let fa = problem.objective(&ga).unwrap();
        let fb = problem.objective(&gb).unwrap();
        let fm = problem.objective(&mid).unwrap();
        let scale = 1.0 + fa.abs().max(fb.abs());
        prop_assert!(fm <= 0.5 * (fa + fb) + 1e-9 * scale);
        // Subgradient inequality from the first point to the second.
        let (value, grad) = problem.objective_and_subgradient(&ga).unwrap();
        let linear: f64 = grad
            .iter()
            .zip(gb.iter().zip(&ga))
            .map(|(g, (b, a))| g * (b - a))
            .sum();
        prop_assert!(fb >= value + linear - 1e-9 * scale);
    }

    #[test]
    fn kernel_ridge_solutions_are_linear_in_the_targets(
        x_raw in prop::collection::vec(-0.4f64..1.4, 10),
        t1 in prop::collection::vec(-2.0f64..2.0, 10),
        t2 in prop::collection::vec(-2.0f64..2.0, 10),
        alpha in -2.0f64..2.0,
    ) {
        let (n, d) = (5, 2);
        let x = SampleSet::new(d, x_raw).unwrap();
        let params = KernelParams::new(0.5, 0.1).unwrap();
        let y1 = SampleSet::new(d, t1.clone()).unwrap();
        let y2 = SampleSet::new(d, t2.clone()).unwrap();
        let combined_values: Vec<f64> = t1
            .iter()
            .zip(&t2)
            .map(|(a, b)| alpha * a + b)
            .collect();
        let combined = SampleSet::new(d, combined_values).unwrap();
        let m1 = kernel::fit(&x, &y1, params).unwrap();
        let m2 = kernel::fit(&x, &y2, params).unwrap();
        let mc = kernel::fit(&x, &combined, params).unwrap();
        let floor = 1e-6
            * (1.0
                + m1.weights().iter().map(|w| w.abs()).fold(0.0, f64::max)
                + m2.weights().iter().map(|w| w.abs()).fold(0.0, f64::max));
        for ((w1, w2), wc) in m1.weights().iter().zip(m2.weights()).zip(mc.weights()) {
            prop_assert!((alpha * w1 + w2 - wc).abs() <= floor);
        }
        // Predictions inherit the same linearity.
        let _ = n;
        let query = [0.3, 0.7];
        let p1 = m1.predict(&query).unwrap();
        let p2 = m2.predict(&query).unwrap();
        let pc = mc.predict(&query).unwrap();
        for i in 0..d {
            prop_assert!((alpha * p1[i] + p2[i] - pc[i]).abs() <= floor);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn results_csv_round_trips_arbitrary_records(
        rows in prop::collection::vec(
            (
                "[a-z]{1,8}",
                1usize..=10,
                1usize..=100_000,
                "[a-z]{1,8}",
                "[a-zA-Z0-9_=;.|-]{0,16}",
                0usize..=31,
                any::<u64>(),
                prop_oneof![
                    prop::num::f64::POSITIVE
                        | prop::num::f64::NEGATIVE
                        | prop::num::f64::NORMAL
                        | prop::num::f64::ZERO
                        | prop::num::f64::INFINITE,
                    Just(f64::NAN),
                ],
                0.0f64..1e6,
            ),
            0..8,
        ),
    ) {
        let records: Vec<ResultRecord> = rows
            .into_iter()
            .map(|(problem, d, n, estimator, params, replicate, seed, mse, wall_ms)| {
                ResultRecord { problem, d, n, estimator, params, replicate, seed, mse, wall_ms }
            })
            .collect();
        let parsed = records_from_csv(&records_to_csv(&records)).unwrap();
        prop_assert_eq!(parsed, records);
    }

    #[test]
    fn seed_derivation_is_deterministic_and_coordinate_sensitive(
        base in any::<u64>(),
        n in 1usize..=1_000_000,
        replicate in 0usize..=1_000,
        stream in 0u64..=7,
    ) {
        let seed = derive_seed(base, n, replicate, stream);
        prop_assert_eq!(seed, derive_seed(base, n, replicate, stream));
        prop_assert_ne!(seed, derive_seed(base, n + 1, replicate, stream));
        prop_assert_ne!(seed, derive_seed(base, n, replicate + 1, stream));
        prop_assert_ne!(seed, derive_seed(base, n, replicate, stream + 1));
    }
}
