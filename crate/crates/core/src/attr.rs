//! Sparse attribute-only surrogate: L1-penalized multinomial logistic regression of the
//! blackbox predictions on binary attributes, plus L1-strength selection.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, SplitData};
use crate::error::{Error, Result};
use crate::linalg::argmax_rows;
use crate::solver::{self, SolverOptions};
use crate::split::Split;

/// Weights with magnitude at or below this count as zero.
pub const NONZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeExplanation {
    /// C x (K+1), bias in the last column.
    pub weights: Array2<f64>,
    pub lambda1: f64,
    pub attribute_names: Vec<String>,
    pub class_names: Vec<String>,
    /// False when the solver hit its iteration cap.
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl AttributeExplanation {
    /// A model with no attribute weights and log-prior bias on the train split.
    pub fn intercept_only(bundle: &DatasetBundle) -> Result<Self> {
        let train = bundle.split_data(Split::Train)?;
        let c = bundle.n_classes();
        let k = bundle.n_attributes();
        let mut weights = Array2::zeros((c, k + 1));
        for (i, b) in solver::log_prior_bias(&train.labels, c).into_iter().enumerate() {
            weights[[i, k]] = b;
        }
        Ok(AttributeExplanation {
            weights,
            lambda1: f64::INFINITY,
            attribute_names: bundle.attribute_names().to_vec(),
            class_names: bundle.class_names().to_vec(),
            converged: true,
            iterations: 0,
            objective: f64::NAN,
        })
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Number of non-bias weights with `|w| > 1e-8`.
    pub fn nonzero_count(&self) -> usize {
        let k = self.n_attributes();
        self.weights
            .slice(s![.., ..k])
            .iter()
            .filter(|v| v.abs() > NONZERO_THRESHOLD)
            .count()
    }

    pub fn weight(&self, class: usize, attribute: usize) -> f64 {
        self.weights[[class, attribute]]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.weights[[class, self.n_attributes()]]
    }

    /// N x C logits for an N x K attribute matrix.
    pub fn logits(&self, attributes: &Array2<f64>) -> Array2<f64> {
        solver::logits(attributes, &self.weights)
    }

    pub fn predict(&self, attributes: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.logits(attributes))
    }

    pub fn fidelity_on(&self, data: &SplitData) -> f64 {
        agreement(&self.predict(&data.attributes), &data.labels)
    }
}

pub(crate) fn agreement(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttrFitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AttrFitOptions {
    fn default() -> Self {
        AttrFitOptions {
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

pub fn fit_attribute_model(bundle: &DatasetBundle, lambda1: f64) -> Result<AttributeExplanation> {
    fit_attribute_model_with(bundle, lambda1, &AttrFitOptions::default(), None)
}

/// Fits on the train split. `warm` is a C x (K+1) starting point.
pub fn fit_attribute_model_with(
    bundle: &DatasetBundle,
    lambda1: f64,
    opts: &AttrFitOptions,
    warm: Option<&Array2<f64>>,
) -> Result<AttributeExplanation> {
    if !(lambda1 > 0.0) || !lambda1.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda1 must be positive, got {lambda1}")));
    }
    let train = bundle.split_data(Split::Train)?;
    let solver_opts = SolverOptions {
        l1: lambda1,
        ridge: 0.0,
        max_iter: opts.max_iter,
        tol: opts.tol,
    };
    let out = solver::fit_multinomial(&train.attributes, &train.labels, bundle.n_classes(), &solver_opts, warm);
    if !out.objective.is_finite() {
        return Err(Error::Divergence {
            epoch: out.iterations,
            loss: out.objective,
        });
    }
    if !out.converged {
        log::warn!(
            "attribute fit at lambda={lambda1} stopped after {} iterations without converging",
            out.iterations
        );
    }
    Ok(AttributeExplanation {
        weights: out.weights,
        lambda1,
        attribute_names: bundle.attribute_names().to_vec(),
        class_names: bundle.class_names().to_vec(),
        converged: out.converged,
        iterations: out.iterations,
        objective: out.objective,
    })
}

/// Smallest L1 strength for which all-zero attribute weights are optimal on the train split.
pub fn lambda_max(bundle: &DatasetBundle) -> Result<f64> {
    let train = bundle.split_data(Split::Train)?;
    let c = bundle.n_classes();
    let n = train.len() as f64;
    let mut counts = vec![0.0; c];
    for &y in &train.labels {
        counts[y] += 1.0;
    }
    let prior: Vec<f64> = counts.iter().map(|v| v / n).collect();
    let mut max = 0.0f64;
    for k in 0..bundle.n_attributes() {
        let col = train.attributes.column(k);
        for (class, &p) in prior.iter().enumerate() {
            let g: f64 = col
                .iter()
                .zip(&train.labels)
                .map(|(&a, &y)| (p - if y == class { 1.0 } else { 0.0 }) * a)
                .sum::<f64>()
                / n;
            max = max.max(g.abs());
        }
    }
    Ok(max)
}

/// `points` values log-spaced from `hi` down to `hi * ratio`.
pub fn log_grid(hi: f64, ratio: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![hi];
    }
    let lo = hi * ratio;
    (0..points)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// 20 points log-spaced in `[1e-4 * lambda_max, lambda_max]`, decreasing.
pub fn default_grid(bundle: &DatasetBundle) -> Result<Vec<f64>> {
    let hi = lambda_max(bundle)?;
    if !(hi > 0.0) {
        return Err(Error::InvalidArgument(
            "attributes carry no signal on the train split (lambda_max = 0)".into(),
        ));
    }
    Ok(log_grid(hi, 1e-4, 20))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda1: f64,
    pub nonzero_count: usize,
    pub fidelity_val: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LambdaPath {
    pub points: Vec<LambdaPoint>,
    /// Fitted explanations, parallel to `points`.
    pub explanations: Vec<AttributeExplanation>,
    /// Grid points whose fit failed, with the diagnostic.
    pub failures: Vec<(f64, String)>,
}

impl LambdaPath {
    pub fn from_points(points: Vec<LambdaPoint>) -> Self {
        LambdaPath {
            points,
            ..Default::default()
        }
    }

    pub fn explanation_for(&self, lambda1: f64) -> Option<&AttributeExplanation> {
        self.explanations.iter().find(|e| e.lambda1 == lambda1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SweepMode {
    /// Each point starts from the previous (sparser) solution.
    #[default]
    WarmStart,
    /// Independent cold starts, run in parallel.
    ColdParallel,
}

pub fn lambda_sweep(bundle: &DatasetBundle, grid: &[f64]) -> Result<LambdaPath> {
    lambda_sweep_with(bundle, grid, &AttrFitOptions::default(), SweepMode::WarmStart)
}

pub fn lambda_sweep_with(
    bundle: &DatasetBundle,
    grid: &[f64],
    opts: &AttrFitOptions,
    mode: SweepMode,
) -> Result<LambdaPath> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0)) || grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "lambda grid must be positive and strictly decreasing".into(),
        ));
    }
    let val = bundle.split_data(Split::Val)?;
    let fits: Vec<(f64, Result<AttributeExplanation>)> = match mode {
        SweepMode::WarmStart => {
            let mut warm: Option<Array2<f64>> = None;
            grid.iter()
                .map(|&l| {
                    let r = fit_attribute_model_with(bundle, l, opts, warm.as_ref());
                    if let Ok(e) = &r {
                        warm = Some(e.weights.clone());
                    }
                    (l, r)
                })
                .collect()
        }
        SweepMode::ColdParallel => grid
            .par_iter()
            .map(|&l| (l, fit_attribute_model_with(bundle, l, opts, None)))
            .collect(),
    };
    let mut path = LambdaPath::default();
    for (l, r) in fits {
        match r {
            Ok(e) => {
                path.points.push(LambdaPoint {
                    lambda1: l,
                    nonzero_count: e.nonzero_count(),
                    fidelity_val: e.fidelity_on(&val),
                    converged: e.converged,
                });
                path.explanations.push(e);
            }
            Err(err) => path.failures.push((l, err.to_string())),
        }
    }
    Ok(path)
}

/// Validation-fidelity gains smaller than this do not count as an improvement when
/// locating the knee.
pub const KNEE_MIN_GAIN: f64 = 0.005;

/// Picks the lambda at the maximum-curvature knee of validation fidelity against the
/// number of nonzero weights.
///
/// Points are ordered by nonzero count; among points sharing a count, the one with the
/// best fidelity represents it (larger lambda on ties). The curve is then the running
/// maximum of fidelity, raised only by gains of at least [`KNEE_MIN_GAIN`], so plateaus
/// and sub-threshold wiggles are flat. The score at an interior point is the drop in
/// slope `slope(left) - slope(right)`; endpoints score 0 and ties go to the larger
/// lambda. A curve with no positive score selects the sparsest point.
pub fn select_knee(path: &LambdaPath) -> Result<f64> {
    if path.points.len() < 3 {
        return Err(Error::InsufficientPath(path.points.len()));
    }
    let mut curve: Vec<LambdaPoint> = Vec::new();
    let mut ranked = path.points.clone();
    ranked.sort_by(|a, b| {
        b.fidelity_val
            .partial_cmp(&a.fidelity_val)
            .unwrap()
            .then(b.lambda1.partial_cmp(&a.lambda1).unwrap())
    });
    for p in ranked {
        if !curve.iter().any(|q| q.nonzero_count == p.nonzero_count) {
            curve.push(p);
        }
    }
    curve.sort_by_key(|p| p.nonzero_count);
    let mut level = curve[0].fidelity_val;
    for p in curve.iter_mut() {
        if p.fidelity_val >= level + KNEE_MIN_GAIN {
            level = p.fidelity_val;
        }
        p.fidelity_val = level;
    }
    let slope = |a: &LambdaPoint, b: &LambdaPoint| {
        (b.fidelity_val - a.fidelity_val) / (b.nonzero_count as f64 - a.nonzero_count as f64)
    };
    let mut best = (0.0f64, curve[0].lambda1);
    for i in 1..curve.len().saturating_sub(1) {
        let score = slope(&curve[i - 1], &curve[i]) - slope(&curve[i], &curve[i + 1]);
        let better = score > best.0 + 1e-12
            || ((score - best.0).abs() <= 1e-12 && curve[i].lambda1 > best.1);
        if better {
            best = (score, curve[i].lambda1);
        }
    }
    // endpoints score zero: the sparsest point wins any tie at zero
    if best.0 <= 1e-12 {
        return Ok(curve[0].lambda1);
    }
    Ok(best.1)
}
