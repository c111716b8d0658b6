#![allow(dead_code)]

use lowrank_explain::data::{AttributeMatrix, DatasetBundle, FeatureMatrix, PredictionVector};
use lowrank_explain::split::{Split, SplitAssignment};
use ndarray::Array2;

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn bundle(
    features: &Array2<f64>,
    attributes: &[Vec<u8>],
    labels: &[u32],
    n_classes: usize,
    split: SplitAssignment,
) -> DatasetBundle {
    let n = labels.len();
    let k = attributes.first().map_or(0, |r| r.len());
    DatasetBundle::new(
        FeatureMatrix::from_array(features).unwrap(),
        AttributeMatrix::new(n, k, attributes.concat(), names("a", k)).unwrap(),
        PredictionVector::new(labels.to_vec(), names("c", n_classes)).unwrap(),
        split,
    )
    .unwrap()
}

pub fn all_train(n: usize) -> SplitAssignment {
    SplitAssignment::from_tags(vec![Split::Train; n])
}

/// 20 samples, 3 binary attributes, 2 classes, with conflicting labels so the
/// unpenalized optimum is finite.
pub const TINY_X: [[u8; 3]; 20] = [
    [1, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
    [1, 1, 1],
    [0, 1, 1],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 0, 0],
    [1, 1, 1],
    [0, 1, 1],
    [1, 0, 0],
    [0, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
];
pub const TINY_Y: [u32; 20] = [1, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1];

pub fn tiny_bundle() -> DatasetBundle {
    let attrs: Vec<Vec<u8>> = TINY_X.iter().map(|r| r.to_vec()).collect();
    let features = Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
    bundle(&features, &attrs, &TINY_Y, 2, all_train(20))
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized two-class loss by brute force: weight differences `d` on the grid
/// -5..=5 step 0.05 in every coordinate, bias minimized exactly by Newton's method.
///
/// For two classes the multinomial loss depends on the weights only through
/// `d = w_1 - w_0`, and the smallest `|w_0|_1 + |w_1|_1` with a given `d` is `|d|_1`,
/// so this is the same minimum the multinomial solver targets.
pub fn tiny_grid_minimum(lambda: f64) -> f64 {
    // 8 distinct attribute patterns: (count, positives) per pattern
    let mut count = [0.0f64; 8];
    let mut pos = [0.0f64; 8];
    for (x, &y) in TINY_X.iter().zip(&TINY_Y) {
        let p = (x[0] as usize) | (x[1] as usize) << 1 | (x[2] as usize) << 2;
        count[p] += 1.0;
        pos[p] += y as f64;
    }
    let n = TINY_Y.len() as f64;
    let grid: Vec<f64> = (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect();
    let mut best = f64::INFINITY;
    for &d0 in &grid {
        for &d1 in &grid {
            for &d2 in &grid {
                let z: Vec<f64> = (0..8)
                    .map(|p| d0 * (p & 1) as f64 + d1 * ((p >> 1) & 1) as f64 + d2 * ((p >> 2) & 1) as f64)
                    .collect();
                let mut b = 0.0f64;
                for _ in 0..50 {
                    let (mut g, mut h) = (0.0, 0.0);
                    for p in 0..8 {
                        let s = 1.0 / (1.0 + (-(z[p] + b)).exp());
                        g += count[p] * s - pos[p];
                        h += count[p] * s * (1.0 - s);
                    }
                    let step = g / h.max(1e-12);
                    b -= step;
                    if step.abs() < 1e-13 {
                        break;
                    }
                }
                let loss: f64 = (0..8)
                    .map(|p| count[p] * softplus(z[p] + b) - pos[p] * (z[p] + b))
                    .sum::<f64>()
                    / n;
                let total = loss + lambda * (d0.abs() + d1.abs() + d2.abs());
                if total < best {
                    best = total;
                }
            }
        }
    }
    best
}

/// An explanation with Gaussian weights, `U` and `V`, independent of any data.
pub fn random_explanation(k: usize, d: usize, c: usize, r: usize, seed: u64) -> lowrank_explain::Explanation {
    use lowrank_explain::linalg::gaussian;
    use lowrank_explain::residual::ResidualOptions;
    let mut g = lowrank_explain::seed::rng(seed);
    let attr = lowrank_explain::AttributeExplanation {
        weights: gaussian(c, k + 1, &mut g),
        lambda1: 0.01,
        attribute_names: names("a", k),
        class_names: names("c", c),
        converged: true,
        iterations: 0,
        objective: 0.0,
    };
    let residual = (r > 0).then(|| lowrank_explain::LowRankResidual {
        u: gaussian(r, d, &mut g),
        v: gaussian(r, c, &mut g),
        options: ResidualOptions::default(),
        log: vec![],
        best_epoch: 0,
    });
    lowrank_explain::Explanation::new(attr, residual)
}

/// `e` with the bundle's attribute and class names.
pub fn conform(mut e: lowrank_explain::Explanation, b: &DatasetBundle) -> lowrank_explain::Explanation {
    e.attr.attribute_names = b.attribute_names().to_vec();
    e.attr.class_names = b.class_names().to_vec();
    e
}
