//! Rank-constrained residual `U^T V` over the blackbox features, trained with the
//! attribute logits frozen, plus rank selection.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attr::{agreement, AttributeExplanation};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::explanation::Explanation;
use crate::linalg::{argmax_rows, mean_cross_entropy, random_orthonormal_rows, softmax_cross_entropy};
use crate::metrics;
use crate::seed::{derive_seed, rng};
use crate::split::Split;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without improving validation fidelity or loss.
    pub patience: usize,
    /// `None` means full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 500,
            patience: 20,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_fidelity: f64,
    pub val_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankResidual {
    /// r x D projection.
    pub u: Array2<f64>,
    /// r x C head.
    pub v: Array2<f64>,
    pub options: ResidualOptions,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl LowRankResidual {
    pub fn rank(&self) -> usize {
        self.u.nrows()
    }

    /// N x r activations `U f(x)`.
    pub fn activations(&self, features: &Array2<f64>) -> Array2<f64> {
        features.dot(&self.u.t())
    }

    /// N x C residual logits `V^T (U f(x))`.
    pub fn logits(&self, features: &Array2<f64>) -> Array2<f64> {
        self.activations(features).dot(&self.v)
    }

    /// The D x C matrix `U^T V`.
    pub fn combined(&self) -> Array2<f64> {
        self.u.t().dot(&self.v)
    }
}

/// One prediction head seen by the trainer: frozen base logits and labels per split.
pub(crate) struct HeadTarget {
    pub base_train: Array2<f64>,
    pub labels_train: Vec<usize>,
    pub base_val: Array2<f64>,
    pub labels_val: Vec<usize>,
}

pub(crate) struct TrainOutput {
    pub u: Array2<f64>,
    pub vs: Vec<Array2<f64>>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Adam {
    fn new(shape: (usize, usize)) -> Self {
        Adam {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    fn step(&mut self, param: &mut Array2<f64>, grad: &Array2<f64>, t: i32, o: &ResidualOptions) {
        let b1 = o.beta1;
        let b2 = o.beta2;
        self.m.zip_mut_with(grad, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        self.v.zip_mut_with(grad, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        ndarray::Zip::from(param)
            .and(&self.m)
            .and(&self.v)
            .for_each(|p, &m, &v| *p -= o.learning_rate * (m / c1) / ((v / c2).sqrt() + o.epsilon));
    }
}

fn head_fidelity(features_proj: &Array2<f64>, base: &Array2<f64>, v: &Array2<f64>, labels: &[usize]) -> f64 {
    let logits = base + &features_proj.dot(v);
    agreement(&argmax_rows(&logits), labels)
}

fn head_loss(features_proj: &Array2<f64>, base: &Array2<f64>, v: &Array2<f64>, labels: &[usize]) -> f64 {
    mean_cross_entropy(&(base + &features_proj.dot(v)), labels)
}

/// Adam on `U` (optionally frozen) and one `V` per head, summed cross-entropy over heads.
/// `V` starts at zero so epoch 0 is exactly the base-logit model; the returned parameters
/// are those of the epoch with the best mean validation fidelity (earliest on ties).
pub(crate) fn train_low_rank(
    features_train: &Array2<f64>,
    features_val: &Array2<f64>,
    heads: &[HeadTarget],
    u_init: Array2<f64>,
    train_u: bool,
    opts: &ResidualOptions,
) -> Result<TrainOutput> {
    let r = u_init.nrows();
    let mut u = u_init;
    let mut vs: Vec<Array2<f64>> = heads
        .iter()
        .map(|h| Array2::zeros((r, h.base_train.ncols())))
        .collect();
    let mut adam_u = Adam::new(u.dim());
    let mut adam_v: Vec<Adam> = vs.iter().map(|v| Adam::new(v.dim())).collect();
    let m = heads.len() as f64;

    let evaluate = |u: &Array2<f64>, vs: &[Array2<f64>]| {
        let ht = features_train.dot(&u.t());
        let hv = features_val.dot(&u.t());
        let mut train = 0.0;
        let mut val = 0.0;
        let mut val_loss = 0.0;
        for (h, v) in heads.iter().zip(vs) {
            train += head_fidelity(&ht, &h.base_train, v, &h.labels_train);
            val += head_fidelity(&hv, &h.base_val, v, &h.labels_val);
            val_loss += head_loss(&hv, &h.base_val, v, &h.labels_val);
        }
        (train / m, val / m, val_loss)
    };

    let (train0, val0, loss0) = evaluate(&u, &vs);
    let mut log = vec![EpochLog {
        epoch: 0,
        train_fidelity: train0,
        val_fidelity: val0,
    }];
    let mut best = (val0, 0usize, u.clone(), vs.clone());
    let mut best_loss = loss0;
    let mut stale = 0usize;
    let mut step = 0i32;
    let n = features_train.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng(derive_seed(opts.seed, "residual-batches", 0));

    for epoch in 1..=opts.max_epochs {
        let batches: Vec<Vec<usize>> = match opts.batch_size {
            Some(b) if b > 0 && b < n => {
                order.shuffle(&mut shuffle_rng);
                order.chunks(b).map(|c| c.to_vec()).collect()
            }
            _ => vec![],
        };
        let full_batch = batches.is_empty();
        let n_batches = if full_batch { 1 } else { batches.len() };
        for bi in 0..n_batches {
            let (f_b, targets): (Array2<f64>, Vec<(Array2<f64>, Vec<usize>)>) = if full_batch {
                (features_train.clone(), vec![])
            } else {
                let idx = &batches[bi];
                (
                    features_train.select(Axis(0), idx),
                    heads
                        .iter()
                        .map(|h| {
                            (
                                h.base_train.select(Axis(0), idx),
                                idx.iter().map(|&i| h.labels_train[i]).collect(),
                            )
                        })
                        .collect(),
                )
            };
            let proj = f_b.dot(&u.t());
            let nb = f_b.nrows() as f64;
            let mut grad_h = Array2::<f64>::zeros(proj.dim());
            let mut loss = 0.0;
            let mut grads_v = Vec::with_capacity(heads.len());
            for (j, h) in heads.iter().enumerate() {
                let (base, labels) = if full_batch {
                    (&h.base_train, &h.labels_train)
                } else {
                    (&targets[j].0, &targets[j].1)
                };
                let logits = base + &proj.dot(&vs[j]);
                let (mut g, ce) = softmax_cross_entropy(&logits, labels);
                loss += ce;
                for (i, &y) in labels.iter().enumerate() {
                    g[[i, y]] -= 1.0;
                }
                g /= nb;
                grads_v.push(proj.t().dot(&g));
                if train_u {
                    grad_h += &g.dot(&vs[j].t());
                }
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            step += 1;
            for (j, g) in grads_v.iter().enumerate() {
                adam_v[j].step(&mut vs[j], g, step, opts);
            }
            if train_u {
                let grad_u = grad_h.t().dot(&f_b);
                adam_u.step(&mut u, &grad_u, step, opts);
            }
        }

        let (train_fid, val_fid, val_loss) = evaluate(&u, &vs);
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: val_loss,
            });
        }
        log.push(EpochLog {
            epoch,
            train_fidelity: train_fid,
            val_fidelity: val_fid,
        });
        let mut improved = false;
        if val_fid > best.0 {
            best = (val_fid, epoch, u.clone(), vs.clone());
            improved = true;
        }
        if val_loss < best_loss - 1e-4 * best_loss.abs() {
            best_loss = val_loss;
            improved = true;
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                break;
            }
        }
    }
    let (_, best_epoch, u, vs) = best;
    Ok(TrainOutput {
        u,
        vs,
        log,
        best_epoch,
    })
}

/// Fits `U` (r x D) and `V` (r x C) on the train split with the attribute logits frozen.
pub fn fit_residual(
    bundle: &DatasetBundle,
    attr: &AttributeExplanation,
    rank: usize,
    opts: &ResidualOptions,
) -> Result<LowRankResidual> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    check_schema(bundle, attr)?;
    let d = bundle.n_features();
    let c = bundle.n_classes();
    if rank >= d.min(c) {
        log::warn!("rank {rank} >= min(D, C) = {}: the rank constraint is vacuous", d.min(c));
    }
    let train = bundle.split_data(Split::Train)?;
    let val = bundle.split_data(Split::Val)?;
    let head = HeadTarget {
        base_train: attr.logits(&train.attributes),
        labels_train: train.labels.clone(),
        base_val: attr.logits(&val.attributes),
        labels_val: val.labels.clone(),
    };
    let mut init_rng = rng(derive_seed(opts.seed, "residual-init", 0));
    let u0 = random_orthonormal_rows(rank, d, &mut init_rng);
    let out = train_low_rank(&train.features, &val.features, std::slice::from_ref(&head), u0, true, opts)?;
    let v = out.vs.into_iter().next().unwrap();
    Ok(LowRankResidual {
        u: out.u,
        v,
        options: *opts,
        log: out.log,
        best_epoch: out.best_epoch,
    })
}

pub(crate) fn check_schema(bundle: &DatasetBundle, attr: &AttributeExplanation) -> Result<()> {
    if attr.attribute_names != bundle.attribute_names() {
        return Err(Error::Schema("attribute names differ from the bundle".into()));
    }
    if attr.class_names != bundle.class_names() {
        return Err(Error::Schema("class names differ from the bundle".into()));
    }
    Ok(())
}

/// Power of two nearest to `max(1, r_all - r_a)`; exact midpoints round up.
pub fn choose_rank(r_all: usize, r_a: usize) -> usize {
    let target = r_all.saturating_sub(r_a).max(1);
    let lo = 1usize << (usize::BITS - 1 - target.leading_zeros());
    if lo == target {
        return target;
    }
    let hi = lo * 2;
    if target - lo < hi - target {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RallOptions {
    /// Fidelity slack below the upper bound.
    pub eps: f64,
    /// Largest rank tried; `None` means `min(D, C)`.
    pub cap: Option<usize>,
    pub residual: ResidualOptions,
}

impl Default for RallOptions {
    fn default() -> Self {
        RallOptions {
            eps: 0.01,
            cap: None,
            residual: ResidualOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RallResult {
    pub r_all: usize,
    pub cap_reached: bool,
    /// Validation fidelity of the full linear probe on features.
    pub upper_bound_val: f64,
    pub bar: f64,
    /// (rank, validation fidelity) for every rank tried, in the order tried.
    pub tried: Vec<(usize, f64)>,
}

/// Smallest rank at which features alone (intercept-only attribute model) reach the
/// validation upper bound within `eps`. Sweeps powers of two up to the cap, then bisects
/// between the bracketing powers.
pub fn compute_r_all(bundle: &DatasetBundle, opts: &RallOptions) -> Result<RallResult> {
    let probe = metrics::upper_bound_probe(bundle)?;
    compute_r_all_against(bundle, probe.fidelity.val, opts)
}

/// [`compute_r_all`] against an already measured validation upper bound.
pub fn compute_r_all_against(bundle: &DatasetBundle, upper: f64, opts: &RallOptions) -> Result<RallResult> {
    if !(opts.eps > 0.0 && opts.eps <= 0.1) {
        return Err(Error::InvalidArgument(format!("eps must be in (0, 0.1], got {}", opts.eps)));
    }
    let bar = upper - opts.eps;
    let cap = opts
        .cap
        .unwrap_or_else(|| bundle.n_features().min(bundle.n_classes()))
        .max(1);
    let base = AttributeExplanation::intercept_only(bundle)?;
    let val = bundle.split_data(Split::Val)?;
    let mut tried: Vec<(usize, f64)> = Vec::new();
    let score = |rank: usize, tried: &mut Vec<(usize, f64)>| -> Result<f64> {
        if let Some(&(_, f)) = tried.iter().find(|(r, _)| *r == rank) {
            return Ok(f);
        }
        let o = ResidualOptions {
            seed: derive_seed(opts.residual.seed, "r_all", rank as u64),
            ..opts.residual
        };
        let res = fit_residual(bundle, &base, rank, &o)?;
        let logits = base.logits(&val.attributes) + res.logits(&val.features);
        let f = agreement(&argmax_rows(&logits), &val.labels);
        tried.push((rank, f));
        Ok(f)
    };

    let mut powers = Vec::new();
    let mut p = 1;
    while p < cap {
        powers.push(p);
        p *= 2;
    }
    powers.push(cap);

    let mut prev = 0usize;
    for &p in &powers {
        if score(p, &mut tried)? >= bar {
            // smallest passing rank in (prev, p]
            let (mut lo, mut hi) = (prev, p);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if score(mid, &mut tried)? >= bar {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(RallResult {
                r_all: hi,
                cap_reached: false,
                upper_bound_val: upper,
                bar,
                tried,
            });
        }
        prev = p;
    }
    log::warn!("no rank up to {cap} reaches the upper bound within {}", opts.eps);
    Ok(RallResult {
        r_all: cap,
        cap_reached: true,
        upper_bound_val: upper,
        bar,
        tried,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub fidelity_test: f64,
    /// Per-class TPR on test; `None` for classes absent from the split.
    pub tpr: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankSweepResult {
    pub entries: Vec<RankEntry>,
    pub failures: Vec<(usize, String)>,
}

/// One residual fit per rank (rank 0 = attribute-only), each with its own derived seed.
pub fn rank_sweep(
    bundle: &DatasetBundle,
    attr: &AttributeExplanation,
    ranks: &[usize],
    opts: &ResidualOptions,
) -> Result<RankSweepResult> {
    if ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ranks must be strictly increasing".into()));
    }
    check_schema(bundle, attr)?;
    let results: Vec<(usize, Result<RankEntry>)> = ranks
        .par_iter()
        .map(|&rank| {
            let entry = (|| {
                let residual = if rank == 0 {
                    None
                } else {
                    let o = ResidualOptions {
                        seed: derive_seed(opts.seed, "rank-sweep", rank as u64),
                        ..*opts
                    };
                    Some(fit_residual(bundle, attr, rank, &o)?)
                };
                let expl = Explanation::new(attr.clone(), residual);
                Ok(RankEntry {
                    rank,
                    fidelity_test: metrics::fidelity(&expl, bundle, Split::Test)?,
                    tpr: metrics::per_class_tpr(&expl, bundle, Split::Test)?,
                })
            })();
            (rank, entry)
        })
        .collect();
    let mut out = RankSweepResult::default();
    for (rank, r) in results {
        match r {
            Ok(e) => out.entries.push(e),
            Err(e) => out.failures.push((rank, e.to_string())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_rank_examples() {
        assert_eq!(choose_rank(32, 29), 4);
        assert_eq!(choose_rank(1, 0), 1);
        assert_eq!(choose_rank(40, 16), 32);
        assert_eq!(choose_rank(5, 10), 1);
        assert_eq!(choose_rank(10, 0), 8);
        assert_eq!(choose_rank(13, 0), 16);
        assert_eq!(choose_rank(12, 0), 16);
        assert_eq!(choose_rank(11, 0), 8);
    }

    #[test]
    fn choose_rank_matches_brute_force() {
        for t in 1..5000usize {
            let got = choose_rank(t, 0);
            // brute force: scan powers, smallest distance, ties to larger
            let mut best = 1usize;
            let mut p = 1usize;
            while p <= 2 * t {
                let d = (p as i64 - t as i64).abs();
                let bd = (best as i64 - t as i64).abs();
                if d < bd || (d == bd && p > best) {
                    best = p;
                }
                p *= 2;
            }
            assert_eq!(got, best, "target {t}");
        }
    }
}
