//! Attribute purging: repeatedly fit a linear probe for an attribute and project the
//! features onto the null space of its normal until the probe's held-out AUC drops
//! below a threshold. The returned `U` spans what is left.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::AttributeMatrix;
use crate::error::{Error, Result};
use crate::linalg::complement_basis;
use crate::metrics::roc_auc;
use crate::seed::rng;
use crate::solver::{self, SolverOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurgeOrder {
    /// Most frequent attribute first, ties by column index.
    #[default]
    Frequency,
    /// Column order.
    Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurgeOptions {
    pub ridge: f64,
    pub order: PurgeOrder,
    /// Projection cap per attribute.
    pub max_iterations: usize,
    /// Fraction of samples held out to score each probe.
    pub holdout_fraction: f64,
    /// Full passes over the attributes before giving up on a clean pass.
    pub max_passes: usize,
    pub seed: u64,
    pub probe_max_iter: usize,
}

impl Default for PurgeOptions {
    fn default() -> Self {
        PurgeOptions {
            ridge: 1e-4,
            order: PurgeOrder::Frequency,
            max_iterations: 20,
            holdout_fraction: 0.2,
            max_passes: 10,
            seed: 0,
            probe_max_iter: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurgeStep {
    pub attribute: usize,
    pub pass: usize,
    /// Probe AUC before deciding; a projection followed iff `auc >= t`.
    pub auc: f64,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePurge {
    pub name: String,
    pub iterations: usize,
    /// Held-out AUC of the last probe; `None` when one class is missing.
    pub final_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurgeResult {
    /// (D - m) x D orthonormal rows spanning the complement of the removed directions.
    pub u: Array2<f64>,
    /// m x D removed directions.
    pub removed: Array2<f64>,
    pub steps: Vec<PurgeStep>,
    pub attributes: Vec<AttributePurge>,
    pub dimension_exhausted: bool,
    pub passes: usize,
}

impl PurgeResult {
    pub fn iterations(&self) -> usize {
        self.attributes.iter().map(|a| a.iterations).sum()
    }
}

/// Deterministic (fit, held-out) index sets: a seeded shuffle, first `fraction` held out.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed));
    let n_eval = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut eval = order[..n_eval].to_vec();
    let mut fit = order[n_eval..].to_vec();
    eval.sort_unstable();
    fit.sort_unstable();
    (fit, eval)
}

/// Fits a ridge logistic probe on the fit rows (features centered on their mean) and
/// returns its normal vector and held-out AUC. `None` if either class is missing.
fn fit_probe(
    features: &Array2<f64>,
    labels: &[bool],
    fit: &[usize],
    eval: &[usize],
    opts: &PurgeOptions,
) -> Option<(Array1<f64>, f64)> {
    let y_fit: Vec<usize> = fit.iter().map(|&i| labels[i] as usize).collect();
    if y_fit.iter().all(|&y| y == y_fit[0]) {
        return None;
    }
    let x_fit = features.select(Axis(0), fit);
    let mean = x_fit.mean_axis(Axis(0)).unwrap();
    let centered = &x_fit - &mean.view().insert_axis(Axis(0));
    let out = solver::fit_multinomial(
        &centered,
        &y_fit,
        2,
        &SolverOptions {
            l1: 0.0,
            ridge: opts.ridge,
            max_iter: opts.probe_max_iter,
            tol: 1e-7,
        },
        None,
    );
    let d = features.ncols();
    let normal: Array1<f64> = (0..d).map(|j| out.weights[[1, j]] - out.weights[[0, j]]).collect();
    let x_eval = features.select(Axis(0), eval);
    let scores: Vec<f64> = (&x_eval - &mean.view().insert_axis(Axis(0))).dot(&normal).to_vec();
    let y_eval: Vec<bool> = eval.iter().map(|&i| labels[i]).collect();
    roc_auc(&scores, &y_eval).map(|auc| (normal, auc))
}

/// Held-out AUC of a fresh probe for each attribute on `features`.
pub fn probe_auc(features: &Array2<f64>, attributes: &AttributeMatrix, opts: &PurgeOptions) -> Vec<Option<f64>> {
    let (fit, eval) = holdout_split(features.nrows(), opts.holdout_fraction, opts.seed);
    (0..attributes.cols())
        .map(|k| {
            let labels: Vec<bool> = attributes.column(k).iter().map(|&v| v == 1).collect();
            fit_probe(features, &labels, &fit, &eval, opts).map(|(_, auc)| auc)
        })
        .collect()
}

fn stack(rows: &[Array1<f64>], d: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), d));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(r);
    }
    m
}

/// Removes linearly decodable attribute information from `features` (N x D).
///
/// Attributes are processed in `opts.order`. Passes repeat until one completes with no
/// projection, so on return every attribute's held-out probe AUC on `U f(x)` is below `t`
/// (unless the dimension is exhausted or a cap is hit, both reported).
pub fn purge_attributes(
    features: &Array2<f64>,
    attributes: &AttributeMatrix,
    t: f64,
    opts: &PurgeOptions,
) -> Result<PurgeResult> {
    if !(t > 0.5 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("AUC threshold must be in (0.5, 1), got {t}")));
    }
    if attributes.rows() != features.nrows() {
        return Err(Error::RowMismatch {
            what: "attributes",
            expected: features.nrows(),
            found: attributes.rows(),
        });
    }
    let (n, d) = features.dim();
    if n < 5 {
        return Err(Error::TooFewSamples(n));
    }
    let (fit, eval) = holdout_split(n, opts.holdout_fraction, opts.seed);

    let mut order: Vec<usize> = (0..attributes.cols()).collect();
    if opts.order == PurgeOrder::Frequency {
        let counts = attributes.counts();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    }
    let labels: Vec<Vec<bool>> = (0..attributes.cols())
        .map(|k| attributes.column(k).iter().map(|&v| v == 1).collect())
        .collect();

    let mut removed: Vec<Array1<f64>> = Vec::new();
    // probes run on `U f(x)`, so the final clean pass is exactly the check a caller
    // repeats on the returned projection
    let mut u = complement_basis(&Array2::zeros((0, d)), d);
    let mut current = features.dot(&u.t());
    let mut steps = Vec::new();
    let mut iterations = vec![0usize; attributes.cols()];
    let mut final_auc: Vec<Option<f64>> = vec![None; attributes.cols()];
    let mut exhausted = false;
    let mut passes = 0;

    'passes: for pass in 0..opts.max_passes.max(1) {
        passes = pass + 1;
        let mut projected_this_pass = 0;
        for &k in &order {
            loop {
                let Some((normal, auc)) = fit_probe(&current, &labels[k], &fit, &eval, opts) else {
                    final_auc[k] = None;
                    break;
                };
                final_auc[k] = Some(auc);
                let project = auc >= t && iterations[k] < opts.max_iterations;
                steps.push(PurgeStep {
                    attribute: k,
                    pass,
                    auc,
                    projected: false,
                });
                if !project {
                    if auc >= t {
                        log::warn!(
                            "attribute {:?} still decodable (AUC {auc:.4}) after {} projections",
                            attributes.names()[k],
                            opts.max_iterations
                        );
                    }
                    break;
                }
                // back to feature space; orthogonal to the removed span by construction
                let mut dir = normal.dot(&u);
                for _ in 0..2 {
                    for r in &removed {
                        let p = dir.dot(r);
                        dir.scaled_add(-p, r);
                    }
                }
                let norm = dir.dot(&dir).sqrt();
                if !(norm > 0.0) {
                    break;
                }
                dir.mapv_inplace(|v| v / norm);
                steps.last_mut().unwrap().projected = true;
                removed.push(dir);
                iterations[k] += 1;
                projected_this_pass += 1;
                if removed.len() >= d {
                    exhausted = true;
                    log::warn!("feature dimension exhausted after {} projections", removed.len());
                    break 'passes;
                }
                u = complement_basis(&stack(&removed, d), d);
                current = features.dot(&u.t());
            }
        }
        if projected_this_pass == 0 {
            break;
        }
    }

    let removed_m = stack(&removed, d);
    let u = complement_basis(&removed_m, d);
    Ok(PurgeResult {
        u,
        removed: removed_m,
        steps,
        attributes: (0..attributes.cols())
            .map(|k| AttributePurge {
                name: attributes.names()[k].clone(),
                iterations: iterations[k],
                final_auc: final_auc[k],
            })
            .collect(),
        dimension_exhausted: exhausted,
        passes,
    })
}
