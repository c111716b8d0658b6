use ndarray::Array2;

use crate::attr::AttributeExplanation;
use crate::data::{AttributeMatrix, DatasetBundle, FeatureMatrix, PredictionVector};
use crate::error::{Error, Result};
use crate::explanation::Explanation;
use crate::linalg::random_orthonormal_rows;
use crate::metrics;
use crate::residual::{train_low_rank, EpochLog, HeadTarget, LowRankResidual, ResidualOptions};
use crate::seed::{derive_seed, rng};
use crate::split::{Split, SplitAssignment};

#[derive(Debug, Clone)]
pub struct Head {
    pub name: String,
    pub predictions: PredictionVector,
}

/// Several heads predicted from the same features, sharing attributes and split.
#[derive(Debug, Clone)]
pub struct HeadSet {
    pub features: FeatureMatrix,
    pub attributes: AttributeMatrix,
    pub heads: Vec<Head>,
    pub split: SplitAssignment,
}

impl HeadSet {
    pub fn new(
        features: FeatureMatrix,
        attributes: AttributeMatrix,
        heads: Vec<Head>,
        split: SplitAssignment,
    ) -> Result<Self> {
        let set = HeadSet {
            features,
            attributes,
            heads,
            split,
        };
        for j in 0..set.heads.len() {
            set.bundle(j)?;
        }
        Ok(set)
    }

    /// Single-head bundle view of head `j`.
    pub fn bundle(&self, j: usize) -> Result<DatasetBundle> {
        DatasetBundle::new(
            self.features.clone(),
            self.attributes.clone(),
            self.heads[j].predictions.clone(),
            self.split.clone(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SharedHead {
    /// Index into the original `HeadSet::heads`.
    pub index: usize,
    pub name: String,
    pub attr: AttributeExplanation,
    /// r x C_j.
    pub v: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SharedFit {
    /// r x D.
    pub u: Array2<f64>,
    pub heads: Vec<SharedHead>,
    /// Heads dropped before fitting, with the reason.
    pub dropped: Vec<(String, String)>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub options: ResidualOptions,
}

impl SharedFit {
    pub fn explanation(&self, head: &SharedHead) -> Explanation {
        Explanation::new(
            head.attr.clone(),
            Some(LowRankResidual {
                u: self.u.clone(),
                v: head.v.clone(),
                options: self.options,
                log: self.log.clone(),
                best_epoch: self.best_epoch,
            }),
        )
    }

    /// Per kept head: fidelity of the combined explanation on `split`.
    pub fn fidelities(&self, set: &HeadSet, split: Split) -> Result<Vec<f64>> {
        self.heads
            .iter()
            .map(|h| metrics::fidelity(&self.explanation(h), &set.bundle(h.index)?, split))
            .collect()
    }

    pub fn mean_fidelity(&self, set: &HeadSet, split: Split) -> Result<f64> {
        let f = self.fidelities(set, split)?;
        Ok(f.iter().sum::<f64>() / f.len().max(1) as f64)
    }
}

fn targets(
    set: &HeadSet,
    attrs: &[AttributeExplanation],
) -> Result<(Vec<usize>, Vec<(String, String)>, Vec<HeadTarget>, Array2<f64>, Array2<f64>)> {
    if attrs.len() != set.heads.len() {
        return Err(Error::InvalidArgument(format!(
            "{} attribute explanations for {} heads",
            attrs.len(),
            set.heads.len()
        )));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, h) in set.heads.iter().enumerate() {
        if h.predictions.observed_classes() < 2 {
            log::warn!("dropping head {:?}: a single class is predicted for every sample", h.name);
            dropped.push((h.name.clone(), "single observed class".to_string()));
        } else {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument("every head was dropped".into()));
    }
    let mut heads = Vec::with_capacity(kept.len());
    let mut features = None;
    for &j in &kept {
        let b = set.bundle(j)?;
        crate::residual::check_schema(&b, &attrs[j])?;
        let train = b.split_data(Split::Train)?;
        let val = b.split_data(Split::Val)?;
        heads.push(HeadTarget {
            base_train: attrs[j].logits(&train.attributes),
            labels_train: train.labels,
            base_val: attrs[j].logits(&val.attributes),
            labels_val: val.labels,
        });
        if features.is_none() {
            features = Some((train.features, val.features));
        }
    }
    let (ft, fv) = features.unwrap();
    Ok((kept, dropped, heads, ft, fv))
}

/// Learns one `U` and a `V` per head by minimizing the unweighted sum of per-head
/// cross-entropies with every head's attribute logits frozen.
pub fn fit_shared_subspace(
    set: &HeadSet,
    attrs: &[AttributeExplanation],
    rank: usize,
    opts: &ResidualOptions,
) -> Result<SharedFit> {
    if set.heads.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 heads, got {}",
            set.heads.len()
        )));
    }
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let (kept, dropped, heads, ft, fv) = targets(set, attrs)?;
    let u0 = random_orthonormal_rows(
        rank,
        set.features.cols(),
        &mut rng(derive_seed(opts.seed, "shared-init", 0)),
    );
    let out = train_low_rank(&ft, &fv, &heads, u0, true, opts)?;
    Ok(assemble(set, attrs, kept, dropped, out.u, out.vs, out.log, out.best_epoch, opts))
}

/// Fits only the per-head `V` for a fixed projection `u` (e.g. a random baseline).
pub fn fit_heads_with_projection(
    set: &HeadSet,
    attrs: &[AttributeExplanation],
    u: &Array2<f64>,
    opts: &ResidualOptions,
) -> Result<SharedFit> {
    if u.ncols() != set.features.cols() {
        return Err(Error::Schema(format!(
            "projection has {} columns, features have {}",
            u.ncols(),
            set.features.cols()
        )));
    }
    let (kept, dropped, heads, ft, fv) = targets(set, attrs)?;
    let out = train_low_rank(&ft, &fv, &heads, u.clone(), false, opts)?;
    Ok(assemble(set, attrs, kept, dropped, out.u, out.vs, out.log, out.best_epoch, opts))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    set: &HeadSet,
    attrs: &[AttributeExplanation],
    kept: Vec<usize>,
    dropped: Vec<(String, String)>,
    u: Array2<f64>,
    vs: Vec<Array2<f64>>,
    log: Vec<EpochLog>,
    best_epoch: usize,
    opts: &ResidualOptions,
) -> SharedFit {
    let heads = kept
        .into_iter()
        .zip(vs)
        .map(|(j, v)| SharedHead {
            index: j,
            name: set.heads[j].name.clone(),
            attr: attrs[j].clone(),
            v,
        })
        .collect();
    SharedFit {
        u,
        heads,
        dropped,
        log,
        best_epoch,
        options: *opts,
    }
}
