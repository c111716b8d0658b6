mod common;

use common::*;
use lowrank_explain::attr::{
    self, default_grid, fit_attribute_model, fit_attribute_model_with, lambda_max, lambda_sweep, AttrFitOptions,
};
use lowrank_explain::metrics::{majority_baseline, majority_class};
use lowrank_explain::solver::{fit_multinomial, SolverOptions};
use lowrank_explain::synth::{planted_bundle, PlantedConfig};
use lowrank_explain::{AttributeMatrix, DatasetBundle, Split};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

// Exhaustive-grid minima of the tiny instance, from `print_tiny_grid_oracle`.
const TINY_ORACLE: [(f64, f64); 2] = [(0.02, 0.614003761924656), (0.1, 0.688138813713588)];

#[test]
#[ignore = "prints the oracle values frozen in TINY_ORACLE"]
fn print_tiny_grid_oracle() {
    for (lambda, _) in TINY_ORACLE {
        println!("lambda {lambda}: {:.15}", tiny_grid_minimum(lambda));
    }
}

#[test]
fn tiny_instance_matches_grid_oracle() {
    let b = tiny_bundle();
    for (lambda, grid_min) in TINY_ORACLE {
        let e = fit_attribute_model(&b, lambda).unwrap();
        assert!(e.converged);
        assert!((e.objective - grid_min).abs() < 1e-3, "{lambda}: {} vs {grid_min}", e.objective);
        // the grid is a restriction of the search space
        assert!(e.objective <= grid_min + 1e-9);
    }
}

fn small_planted(seed: u64) -> DatasetBundle {
    planted_bundle(&PlantedConfig {
        n_samples: 1500,
        seed,
        ..Default::default()
    })
    .unwrap()
    .bundle
}

fn separable_bundle() -> DatasetBundle {
    let labels: Vec<u32> = (0..40).map(|i| (i % 3 == 0) as u32).collect();
    let attrs: Vec<Vec<u8>> = labels.iter().map(|&y| vec![y as u8]).collect();
    let features = Array2::from_shape_fn((40, 2), |(i, j)| ((i + j) % 5) as f64);
    let split = lowrank_explain::make_splits(40, [0.5, 0.25, 0.25], 1).unwrap();
    bundle(&features, &attrs, &labels, 2, split)
}

#[test]
fn separable_attribute_is_fit_exactly() {
    let b = separable_bundle();
    let e = fit_attribute_model(&b, 1e-3).unwrap();
    let train = b.split_data(Split::Train).unwrap();
    assert_eq!(e.fidelity_on(&train), 1.0);
    assert_eq!(e.nonzero_count(), 2);
    assert!(e.weight(0, 0) < 0.0 && e.weight(1, 0) > 0.0);
}

#[test]
fn huge_penalty_predicts_the_majority_class() {
    let b = small_planted(0);
    let e = fit_attribute_model(&b, 1e6).unwrap();
    assert_eq!(e.nonzero_count(), 0);
    let maj = majority_class(&b).unwrap();
    let all = b.all_data();
    assert!(e.predict(&all.attributes).iter().all(|&c| c == maj));
    let test = b.split_data(Split::Test).unwrap();
    assert_eq!(e.fidelity_on(&test), majority_baseline(&b, Split::Test).unwrap());
}

#[test]
fn lambda_max_is_the_smallest_zeroing_penalty() {
    for seed in 0..3 {
        let b = small_planted(seed);
        let hi = lambda_max(&b).unwrap();
        assert_eq!(fit_attribute_model(&b, hi).unwrap().nonzero_count(), 0);
        assert_eq!(fit_attribute_model(&b, hi * 1.5).unwrap().nonzero_count(), 0);
        assert!(fit_attribute_model(&b, hi * 0.95).unwrap().nonzero_count() > 0);
    }
}

#[test]
fn smallest_grid_lambda_is_close_to_the_unpenalized_fit() {
    for seed in 0..3 {
        let b = small_planted(seed);
        let grid = default_grid(&b).unwrap();
        let e = fit_attribute_model(&b, *grid.last().unwrap()).unwrap();
        let train = b.split_data(Split::Train).unwrap();
        let test = b.split_data(Split::Test).unwrap();
        let free = fit_multinomial(&train.attributes, &train.labels, b.n_classes(), &SolverOptions::default(), None);
        let pred = lowrank_explain::linalg::argmax_rows(&lowrank_explain::solver::logits(&test.attributes, &free.weights));
        let free_fid = pred.iter().zip(&test.labels).filter(|(a, b)| a == b).count() as f64 / test.len() as f64;
        assert!((e.fidelity_on(&test) - free_fid).abs() <= 0.02, "{} vs {free_fid}", e.fidelity_on(&test));
    }
}

#[test]
fn single_point_grid() {
    let b = small_planted(1);
    let path = lambda_sweep(&b, &[1e6]).unwrap();
    assert_eq!(path.points.len(), 1);
    assert_eq!(path.points[0].nonzero_count, 0);
}

#[test]
fn separable_sweep_rises_from_baseline_to_one() {
    let b = separable_bundle();
    let path = lambda_sweep(&b, &[1e6, 1e-3]).unwrap();
    assert_eq!(path.points[0].fidelity_val, majority_baseline(&b, Split::Val).unwrap());
    assert_eq!(path.points[1].fidelity_val, 1.0);
}

#[test]
fn sweep_fidelity_is_weakly_increasing_on_train() {
    // Validation fidelity may dip by up to ~1 pp at the small-lambda end as the model
    // starts fitting noise attributes; train fidelity stays monotone within 0.5 pp.
    for seed in 0..5 {
        let b = planted_bundle(&PlantedConfig { seed, ..Default::default() }).unwrap().bundle;
        let path = lambda_sweep(&b, &default_grid(&b).unwrap()).unwrap();
        assert!(path.failures.is_empty());
        let train = b.split_data(Split::Train).unwrap();
        let f: Vec<f64> = path.explanations.iter().map(|e| e.fidelity_on(&train)).collect();
        for w in f.windows(2) {
            assert!(w[1] >= w[0] - 0.005, "seed {seed}: {f:?}");
        }
    }
}

#[test]
fn warm_and_cold_sweeps_agree() {
    let b = small_planted(2);
    let grid = attr::log_grid(lambda_max(&b).unwrap(), 1e-2, 6);
    let opts = AttrFitOptions {
        tol: 1e-9,
        ..Default::default()
    };
    let warm = attr::lambda_sweep_with(&b, &grid, &opts, attr::SweepMode::WarmStart).unwrap();
    let cold = attr::lambda_sweep_with(&b, &grid, &opts, attr::SweepMode::ColdParallel).unwrap();
    for (w, c) in warm.explanations.iter().zip(&cold.explanations) {
        assert!((w.objective - c.objective).abs() < 1e-6);
    }
}

fn permute_attributes(b: &DatasetBundle, perm: &[usize]) -> DatasetBundle {
    let a = &b.attributes;
    let values = (0..a.rows()).flat_map(|i| perm.iter().map(move |&j| a.get(i, j))).collect();
    let names = perm.iter().map(|&j| a.names()[j].clone()).collect();
    DatasetBundle::new(
        b.features.clone(),
        AttributeMatrix::new(a.rows(), a.cols(), values, names).unwrap(),
        b.predictions.clone(),
        b.split.clone(),
    )
    .unwrap()
}

#[test]
fn permuting_attributes_permutes_weights() {
    let b = small_planted(3);
    let perm = [3, 0, 9, 1, 8, 2, 7, 4, 6, 5];
    let pb = permute_attributes(&b, &perm);
    let opts = AttrFitOptions {
        tol: 1e-10,
        max_iter: 50_000,
    };
    let lambda = 0.05 * lambda_max(&b).unwrap();
    let e = fit_attribute_model_with(&b, lambda, &opts, None).unwrap();
    let pe = fit_attribute_model_with(&pb, lambda, &opts, None).unwrap();
    for c in 0..b.n_classes() {
        for (new, &old) in perm.iter().enumerate() {
            assert!((pe.weight(c, new) - e.weight(c, old)).abs() < 1e-5);
        }
        assert!((pe.bias(c) - e.bias(c)).abs() < 1e-5);
    }
    let test = b.split_data(Split::Test).unwrap();
    let ptest = pb.split_data(Split::Test).unwrap();
    assert_eq!(e.fidelity_on(&test), pe.fidelity_on(&ptest));
}

#[test]
fn duplicated_attribute_keeps_quality() {
    let b = small_planted(4);
    let a = &b.attributes;
    let k = a.cols();
    let values = (0..a.rows())
        .flat_map(|i| (0..=k).map(move |j| a.get(i, if j == k { 0 } else { j })))
        .collect();
    let mut names = a.names().to_vec();
    names.push("copy_of_attr0".into());
    let db = DatasetBundle::new(
        b.features.clone(),
        AttributeMatrix::new(a.rows(), k + 1, values, names).unwrap(),
        b.predictions.clone(),
        b.split.clone(),
    )
    .unwrap();
    let lambda = 0.05 * lambda_max(&b).unwrap();
    let e = fit_attribute_model(&b, lambda).unwrap();
    let de = fit_attribute_model(&db, lambda).unwrap();
    assert!(de.objective <= e.objective + 1e-6);
    let train = b.split_data(Split::Train).unwrap();
    let dtrain = db.split_data(Split::Train).unwrap();
    assert!((e.fidelity_on(&train) - de.fidelity_on(&dtrain)).abs() <= 0.005);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepted_objective_never_increases(seed in 0u64..10_000, l1 in 1e-4f64..0.2, classes in 2usize..5) {
        let mut g = lowrank_explain::seed::rng(seed);
        let n = 60;
        let k = 5;
        let x = Array2::from_shape_fn((n, k), |_| g.random_range(0..2) as f64);
        let y: Vec<usize> = (0..n).map(|_| g.random_range(0..classes)).collect();
        let out = fit_multinomial(&x, &y, classes, &SolverOptions { l1, max_iter: 500, ..Default::default() }, None);
        for w in out.trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn penalty_above_lambda_max_zeroes_everything(seed in 0u64..10_000) {
        let mut g = lowrank_explain::seed::rng(seed);
        let n = 30;
        let attrs: Vec<Vec<u8>> = (0..n).map(|_| (0..4).map(|_| g.random_range(0..2u8)).collect()).collect();
        let labels: Vec<u32> = (0..n).map(|_| g.random_range(0..3u32)).collect();
        let features = Array2::zeros((n, 1));
        let b = bundle(&features, &attrs, &labels, 3, all_train(n));
        if let Ok(hi) = lambda_max(&b) {
            prop_assert_eq!(fit_attribute_model(&b, hi * 1.0001).unwrap().nonzero_count(), 0);
        }
    }
}
