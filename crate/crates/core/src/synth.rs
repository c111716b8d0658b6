//! Synthetic bundles with planted structure, for tests and demos.
//!
//! Features are `f = Z M_Z + (A - p) M_A + offset m + noise`, where the rows of `M_Z`
//! (latent lift), `M_A` (attribute lift) and the unit vector `m` are jointly orthonormal
//! and the noise lives only in their orthogonal complement, so both `Z` and `A` are
//! exactly linear in `f`. The constant offset plays the part of the nonzero mean of
//! rectified network features. The
//! blackbox head is `argmax(Z B_Z^T + A B_A^T + b)`: exactly linear in `[A; Z]`.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{AttributeMatrix, DatasetBundle, FeatureMatrix, PredictionVector};
use crate::error::Result;
use crate::linalg::{argmax_rows, random_orthonormal_rows};
use crate::seed::{derive_seed, rng};
use crate::split::{make_splits, DEFAULT_FRACTIONS};
use crate::subspace::{Head, HeadSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_attributes: usize,
    pub latent_rank: usize,
    pub n_classes: usize,
    /// Std of the complement-space noise.
    pub noise: f64,
    /// Length of the constant feature offset.
    pub offset: f64,
    /// Scale of the latent part of the head.
    pub latent_scale: f64,
    /// Number of attributes the head depends on, and the weight they carry.
    pub active_attributes: usize,
    pub attribute_scale: f64,
    /// Std of the per-class head bias.
    pub head_bias: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_samples: 10000,
            n_features: 64,
            n_attributes: 10,
            latent_rank: 3,
            n_classes: 8,
            noise: 0.0,
            offset: 1.0,
            latent_scale: 3.0,
            active_attributes: 1,
            attribute_scale: 6.0,
            head_bias: 0.5,
            seed: 0,
        }
    }
}

/// The generated pieces, kept for tests that need ground truth.
#[derive(Debug, Clone)]
pub struct Planted {
    pub bundle: DatasetBundle,
    /// N x r latent.
    pub latent: Array2<f64>,
    /// r x D lift of the latent into feature space.
    pub latent_lift: Array2<f64>,
    /// K x D lift of the centered attributes.
    pub attribute_lift: Array2<f64>,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

struct Base {
    latent: Array2<f64>,
    attributes: Array2<f64>,
    features: Array2<f64>,
    latent_lift: Array2<f64>,
    attribute_lift: Array2<f64>,
}

fn base(cfg: &PlantedConfig) -> Base {
    let (n, d, k, r) = (cfg.n_samples, cfg.n_features, cfg.n_attributes, cfg.latent_rank);
    assert!(r + k < d, "latent rank + attributes + offset must fit in the feature dimension");
    let mut g = rng(derive_seed(cfg.seed, "planted-data", 0));
    let rates: Array1<f64> = (0..k).map(|_| g.random_range(0.25..0.6)).collect();
    let attributes = Array2::from_shape_fn((n, k), |(_, j)| (g.random::<f64>() < rates[j]) as u8 as f64);
    let latent = Array2::from_shape_simple_fn((n, r), || g.sample::<f64, _>(StandardNormal));
    let basis = random_orthonormal_rows(d, d, &mut g);
    let latent_lift = basis.slice(s![..r, ..]).to_owned();
    let attribute_lift = basis.slice(s![r..r + k, ..]).to_owned();
    let offset = basis.row(r + k).to_owned() * cfg.offset;
    let complement = basis.slice(s![r + k + 1.., ..]).to_owned();
    let noise = Array2::from_shape_simple_fn((n, d - r - k - 1), || cfg.noise * g.sample::<f64, _>(StandardNormal));
    let centered = &attributes - &rates.view().insert_axis(ndarray::Axis(0));
    let features = latent.dot(&latent_lift)
        + centered.dot(&attribute_lift)
        + noise.dot(&complement)
        + &offset.view().insert_axis(ndarray::Axis(0));
    Base {
        latent,
        attributes,
        features,
        latent_lift,
        attribute_lift,
    }
}

/// Head logits `Z B_Z^T + A B_A^T + b` with `B_A` supported on the first
/// `active_attributes` attributes, each pushing one class.
fn head_logits(cfg: &PlantedConfig, base: &Base, n_classes: usize, head_seed: u64) -> Array2<f64> {
    let mut g = rng(head_seed);
    let r = cfg.latent_rank;
    let k = cfg.n_attributes;
    let bz = Array2::from_shape_simple_fn((n_classes, r), || cfg.latent_scale * g.sample::<f64, _>(StandardNormal));
    let mut ba = Array2::<f64>::zeros((n_classes, k));
    for a in 0..cfg.active_attributes.min(k) {
        ba[[a % n_classes, a]] = cfg.attribute_scale;
    }
    let bias: Array1<f64> = (0..n_classes).map(|_| cfg.head_bias * g.sample::<f64, _>(StandardNormal)).collect();
    base.latent.dot(&bz.t()) + base.attributes.dot(&ba.t()) + &bias.view().insert_axis(ndarray::Axis(0))
}

fn to_u8(a: &Array2<f64>) -> Vec<u8> {
    a.iter().map(|&v| v as u8).collect()
}

pub fn planted_bundle(cfg: &PlantedConfig) -> Result<Planted> {
    let b = base(cfg);
    let logits = head_logits(cfg, &b, cfg.n_classes, derive_seed(cfg.seed, "planted-head", 0));
    let labels: Vec<u32> = argmax_rows(&logits).into_iter().map(|c| c as u32).collect();
    let (n, k) = b.attributes.dim();
    let bundle = DatasetBundle::new(
        FeatureMatrix::from_array(&b.features)?,
        AttributeMatrix::new(n, k, to_u8(&b.attributes), names("attr", k))?,
        PredictionVector::new(labels, names("class", cfg.n_classes))?,
        make_splits(n, DEFAULT_FRACTIONS, derive_seed(cfg.seed, "planted-split", 0))?,
    )?;
    Ok(Planted {
        bundle,
        latent: b.latent,
        latent_lift: b.latent_lift,
        attribute_lift: b.attribute_lift,
    })
}

/// `m` heads with `classes_per_head` classes each, all driven by the same latent.
pub fn planted_head_set(cfg: &PlantedConfig, m: usize, classes_per_head: usize) -> Result<(HeadSet, Array2<f64>)> {
    let b = base(cfg);
    let (n, k) = b.attributes.dim();
    let heads = (0..m)
        .map(|j| {
            let logits = head_logits(cfg, &b, classes_per_head, derive_seed(cfg.seed, "planted-head", j as u64));
            let labels = argmax_rows(&logits).into_iter().map(|c| c as u32).collect();
            Ok(Head {
                name: format!("head{j}"),
                predictions: PredictionVector::new(labels, names(&format!("h{j}_class"), classes_per_head))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = HeadSet::new(
        FeatureMatrix::from_array(&b.features)?,
        AttributeMatrix::new(n, k, to_u8(&b.attributes), names("attr", k))?,
        heads,
        make_splits(n, DEFAULT_FRACTIONS, derive_seed(cfg.seed, "planted-split", 0))?,
    )?;
    Ok((set, b.latent_lift))
}

/// Gaussian features with predictions from a random full-rank linear head on them.
pub fn linear_head_bundle(n: usize, d: usize, c: usize, k: usize, seed: u64) -> Result<DatasetBundle> {
    let mut g = rng(derive_seed(seed, "linear-head", 0));
    let x = Array2::from_shape_simple_fn((n, d), || g.sample::<f64, _>(StandardNormal));
    let w = Array2::from_shape_simple_fn((c, d), || g.sample::<f64, _>(StandardNormal));
    let labels = argmax_rows(&x.dot(&w.t())).into_iter().map(|v| v as u32).collect();
    let attrs: Vec<u8> = (0..n * k).map(|_| g.random_bool(0.5) as u8).collect();
    DatasetBundle::new(
        FeatureMatrix::from_array(&x)?,
        AttributeMatrix::new(n, k, attrs, names("attr", k))?,
        PredictionVector::new(labels, names("class", c))?,
        make_splits(n, DEFAULT_FRACTIONS, derive_seed(seed, "linear-head-split", 0))?,
    )
}

/// Predictions independent of Gaussian features, uniform over `c` classes.
pub fn random_label_bundle(n: usize, d: usize, c: usize, seed: u64) -> Result<DatasetBundle> {
    let mut g = rng(derive_seed(seed, "random-labels", 0));
    let x = Array2::from_shape_simple_fn((n, d), || g.sample::<f64, _>(StandardNormal));
    let labels = (0..n).map(|_| g.random_range(0..c as u32)).collect();
    let attrs: Vec<u8> = (0..n).map(|_| g.random_bool(0.5) as u8).collect();
    DatasetBundle::new(
        FeatureMatrix::from_array(&x)?,
        AttributeMatrix::new(n, 1, attrs, names("attr", 1))?,
        PredictionVector::new(labels, names("class", c))?,
        make_splits(n, DEFAULT_FRACTIONS, derive_seed(seed, "random-labels-split", 0))?,
    )
}
