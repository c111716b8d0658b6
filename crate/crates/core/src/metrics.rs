//! Evaluation: fidelity, the full linear probe upper bound, per-class TPR, attribute
//! importance and importance overlap.

use std::collections::HashSet;
use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::attr::{agreement, AttributeExplanation, NONZERO_THRESHOLD};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::explanation::{Explanation, SplitFidelity};
use crate::linalg::argmax_rows;
use crate::solver::{self, SolverOptions};
use crate::split::Split;

/// Ridge strength of the upper-bound probe.
pub const PROBE_RIDGE: f64 = 1e-6;

fn check_schema(expl: &Explanation, bundle: &DatasetBundle) -> Result<()> {
    crate::residual::check_schema(bundle, &expl.attr)?;
    if let Some(r) = &expl.residual {
        if r.u.ncols() != bundle.n_features() {
            return Err(Error::Schema(format!(
                "residual expects D = {}, bundle has {}",
                r.u.ncols(),
                bundle.n_features()
            )));
        }
    }
    Ok(())
}

/// Explanation predictions on one split, with the blackbox labels.
fn predictions(expl: &Explanation, bundle: &DatasetBundle, split: Split) -> Result<(Vec<usize>, Vec<usize>)> {
    check_schema(expl, bundle)?;
    let data = bundle.split_data(split)?;
    Ok((expl.predict(&data.features, &data.attributes), data.labels))
}

/// Fraction of `split` samples where the explanation's argmax equals the blackbox class.
pub fn fidelity(expl: &Explanation, bundle: &DatasetBundle, split: Split) -> Result<f64> {
    let (pred, labels) = predictions(expl, bundle, split)?;
    Ok(agreement(&pred, &labels))
}

pub fn split_fidelity(expl: &Explanation, bundle: &DatasetBundle) -> Result<SplitFidelity> {
    Ok(SplitFidelity {
        train: fidelity(expl, bundle, Split::Train)?,
        val: fidelity(expl, bundle, Split::Val)?,
        test: fidelity(expl, bundle, Split::Test)?,
    })
}

/// Per class, the fraction of `split` samples with blackbox class `c` that the
/// explanation also assigns to `c`. Classes absent from the split are `None`.
pub fn per_class_tpr(expl: &Explanation, bundle: &DatasetBundle, split: Split) -> Result<Vec<Option<f64>>> {
    let (pred, labels) = predictions(expl, bundle, split)?;
    Ok(tpr_from(&pred, &labels, bundle.n_classes()))
}

pub(crate) fn tpr_from(pred: &[usize], labels: &[usize], n_classes: usize) -> Vec<Option<f64>> {
    let mut support = vec![0usize; n_classes];
    let mut hit = vec![0usize; n_classes];
    for (&p, &y) in pred.iter().zip(labels) {
        support[y] += 1;
        if p == y {
            hit[y] += 1;
        }
    }
    support
        .iter()
        .zip(&hit)
        .map(|(&s, &h)| (s > 0).then(|| h as f64 / s as f64))
        .collect()
}

/// Most frequent class on the train split, ties to the lowest index.
pub fn majority_class(bundle: &DatasetBundle) -> Result<usize> {
    let train = bundle.split_data(Split::Train)?;
    let mut counts = vec![0usize; bundle.n_classes()];
    for &y in &train.labels {
        counts[y] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Fidelity of always predicting the train-majority class on `split`.
pub fn majority_baseline(bundle: &DatasetBundle, split: Split) -> Result<f64> {
    let m = majority_class(bundle)?;
    let data = bundle.split_data(split)?;
    Ok(agreement(&vec![m; data.len()], &data.labels))
}

/// Multinomial linear probe on standardized features predicting the blackbox class.
#[derive(Debug, Clone)]
pub struct UpperBoundProbe {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    /// C x (D+1), bias last, in standardized coordinates.
    pub weights: Array2<f64>,
    pub converged: bool,
    pub fidelity: SplitFidelity,
}

impl UpperBoundProbe {
    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        let z = (features - &self.mean.view().insert_axis(Axis(0))) / &self.scale.view().insert_axis(Axis(0));
        argmax_rows(&solver::logits(&z, &self.weights))
    }
}

pub(crate) fn standardize_stats(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).unwrap();
    let scale = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, scale)
}

pub fn upper_bound_probe(bundle: &DatasetBundle) -> Result<UpperBoundProbe> {
    let train = bundle.split_data(Split::Train)?;
    let (mean, scale) = standardize_stats(&train.features);
    let z = (&train.features - &mean.view().insert_axis(Axis(0))) / &scale.view().insert_axis(Axis(0));
    let opts = SolverOptions {
        l1: 0.0,
        ridge: PROBE_RIDGE,
        ..Default::default()
    };
    let out = solver::fit_multinomial(&z, &train.labels, bundle.n_classes(), &opts, None);
    if !out.objective.is_finite() {
        return Err(Error::Divergence {
            epoch: out.iterations,
            loss: out.objective,
        });
    }
    let mut probe = UpperBoundProbe {
        mean,
        scale,
        weights: out.weights,
        converged: out.converged,
        fidelity: SplitFidelity::default(),
    };
    let fid = |split| -> Result<f64> {
        let d = bundle.split_data(split)?;
        Ok(agreement(&probe.predict(&d.features), &d.labels))
    };
    probe.fidelity = SplitFidelity {
        train: fid(Split::Train)?,
        val: fid(Split::Val)?,
        test: fid(Split::Test)?,
    };
    Ok(probe)
}

/// Test fidelity of the full linear probe on features.
pub fn upper_bound(bundle: &DatasetBundle) -> Result<f64> {
    Ok(upper_bound_probe(bundle)?.fidelity.test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: SplitFidelity,
    pub attribute_only: SplitFidelity,
    /// Full linear probe fidelity per split; `test` is the reported upper bound.
    pub upper_bound: SplitFidelity,
    /// Train-majority class on test.
    pub majority_baseline: f64,
    pub tpr_test: Vec<Option<f64>>,
    pub class_names: Vec<String>,
}

pub fn fidelity_report(expl: &Explanation, bundle: &DatasetBundle, probe: &UpperBoundProbe) -> Result<FidelityReport> {
    let attr_only = Explanation::new(expl.attr.clone(), None);
    Ok(FidelityReport {
        fidelity: split_fidelity(expl, bundle)?,
        attribute_only: split_fidelity(&attr_only, bundle)?,
        upper_bound: probe.fidelity,
        majority_baseline: majority_baseline(bundle, Split::Test)?,
        tpr_test: per_class_tpr(expl, bundle, Split::Test)?,
        class_names: bundle.class_names().to_vec(),
    })
}

/// One CSV row per class: class, support-bearing TPR (empty when absent).
pub fn write_tpr_csv<W: Write>(w: W, class_names: &[String], tpr: &[Option<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["class", "tpr"])?;
    for (name, t) in class_names.iter().zip(tpr) {
        out.write_record([name.clone(), t.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// The `k` largest-magnitude nonzero weights of `class`, signed, ties by attribute name.
pub fn top_attributes(attr: &AttributeExplanation, class: usize, k: usize) -> Result<Vec<(String, f64)>> {
    if class >= attr.n_classes() {
        return Err(Error::InvalidArgument(format!("class {class} out of range")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut entries: Vec<(String, f64)> = (0..attr.n_attributes())
        .map(|j| (attr.attribute_names[j].clone(), attr.weight(class, j)))
        .filter(|(_, w)| w.abs() > NONZERO_THRESHOLD)
        .collect();
    entries.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    entries.truncate(k);
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub class: String,
    pub attributes: Vec<(String, f64)>,
}

pub fn importance_table(attr: &AttributeExplanation, k: usize) -> Result<Vec<ImportanceRow>> {
    (0..attr.n_classes())
        .map(|c| {
            Ok(ImportanceRow {
                class: attr.class_names[c].clone(),
                attributes: top_attributes(attr, c, k)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    /// Per class, the size of the top-k intersection.
    pub per_class: Vec<usize>,
    /// `histogram[j]` = number of classes with overlap `j`, for `j in 0..=k`.
    pub histogram: Vec<usize>,
    pub mean: f64,
}

/// Compares the top-k attribute sets of two explanations over the same schema.
pub fn importance_overlap(a: &AttributeExplanation, b: &AttributeExplanation, k: usize) -> Result<Overlap> {
    if a.class_names != b.class_names || a.attribute_names != b.attribute_names {
        return Err(Error::Schema("explanations have different class or attribute sets".into()));
    }
    let mut per_class = Vec::with_capacity(a.n_classes());
    for c in 0..a.n_classes() {
        let ta: HashSet<String> = top_attributes(a, c, k)?.into_iter().map(|(n, _)| n).collect();
        let tb: HashSet<String> = top_attributes(b, c, k)?.into_iter().map(|(n, _)| n).collect();
        per_class.push(ta.intersection(&tb).count());
    }
    let mut histogram = vec![0usize; k + 1];
    for &o in &per_class {
        histogram[o] += 1;
    }
    let mean = per_class.iter().sum::<usize>() as f64 / per_class.len().max(1) as f64;
    Ok(Overlap {
        per_class,
        histogram,
        mean,
    })
}

/// ROC AUC of `scores` as a ranker for `positive`, ties counted as half
/// (Mann-Whitney). `None` when either class is absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average 1-based rank of the tie block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
