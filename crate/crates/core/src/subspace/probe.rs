use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::metrics::roc_auc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: usize,
    /// Samples with the highest activation, descending; ties by index.
    pub top_indices: Vec<usize>,
    /// Samples with the lowest activation, ascending; ties by index.
    pub bottom_indices: Vec<usize>,
    pub best_attribute: Option<String>,
    /// Orientation-free AUC, `max(auc, 1 - auc)`, of the best attribute.
    pub auc: Option<f64>,
    /// Same quantity for every attribute, `None` where an attribute is constant.
    pub attribute_aucs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    /// Principal axes of the projected features as rows, in direction coordinates.
    pub components: Vec<Vec<f64>>,
    pub variance: Vec<f64>,
    pub variance_share: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub k: usize,
    pub attribute_names: Vec<String>,
    pub directions: Vec<DirectionReport>,
    pub pca: PcaReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_rankings: Vec<ClassRanking>,
}

fn top_k(values: &[f64], k: usize, descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = values[a].partial_cmp(&values[b]).unwrap();
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Ranks samples along each row of `u` (r x D) and scores each direction against the
/// attributes; also reports PCA of the projected features.
pub fn probe_directions(u: &Array2<f64>, bundle: &DatasetBundle, k: usize) -> Result<ProbeReport> {
    let n = bundle.n_samples();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    if u.ncols() != bundle.n_features() {
        return Err(Error::Schema(format!(
            "projection has {} columns, features have {}",
            u.ncols(),
            bundle.n_features()
        )));
    }
    let features = bundle.features.to_array();
    let act = features.dot(&u.t());
    let attrs: Vec<Vec<bool>> = (0..bundle.n_attributes())
        .map(|j| bundle.attributes.column(j).iter().map(|&v| v == 1).collect())
        .collect();

    let directions = (0..u.nrows())
        .map(|d| {
            let col = act.column(d).to_vec();
            let aucs: Vec<Option<f64>> = attrs
                .iter()
                .map(|a| roc_auc(&col, a).map(|v| v.max(1.0 - v)))
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (j, a) in aucs.iter().enumerate() {
                if let Some(v) = *a {
                    if best.map_or(true, |(_, b)| v > b) {
                        best = Some((j, v));
                    }
                }
            }
            DirectionReport {
                direction: d,
                top_indices: top_k(&col, k, true),
                bottom_indices: top_k(&col, k, false),
                best_attribute: best.map(|(j, _)| bundle.attribute_names()[j].clone()),
                auc: best.map(|(_, v)| v),
                attribute_aucs: aucs,
            }
        })
        .collect();

    let mean = act.mean_axis(Axis(0)).unwrap();
    let centered = &act - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
    let (values, vectors) = symmetric_eigen(cov.view());
    let variance: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = variance.iter().sum();
    let variance_share = variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(ProbeReport {
        k,
        attribute_names: bundle.attribute_names().to_vec(),
        directions,
        pca: PcaReport {
            components: vectors.rows().into_iter().map(|r| r.to_vec()).collect(),
            variance,
            variance_share,
        },
        class_rankings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRanking {
    pub class: String,
    pub indices: Vec<usize>,
    /// Set when every sample has the same residual logit, so the order is just by index.
    pub degenerate: bool,
}

/// The `k` samples with the largest residual logit `(V^T U f(x))_class`, ties by index.
pub fn per_class_activation_ranking(
    u: &Array2<f64>,
    v: &Array2<f64>,
    bundle: &DatasetBundle,
    class: usize,
    k: usize,
) -> Result<ClassRanking> {
    let n = bundle.n_samples();
    if class >= bundle.n_classes() || class >= v.ncols() {
        return Err(Error::InvalidArgument(format!("class {class} out of range")));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    if u.nrows() != v.nrows() || u.ncols() != bundle.n_features() {
        return Err(Error::Schema("U and V do not match each other or the bundle".into()));
    }
    let scores = bundle.features.to_array().dot(&u.t()).dot(&v.column(class));
    let scores = scores.to_vec();
    let first = scores[0];
    let degenerate = scores.iter().all(|&s| s == first);
    if degenerate {
        log::warn!("residual logit for class {class} is constant; ranking falls back to index order");
    }
    Ok(ClassRanking {
        class: bundle.class_names()[class].clone(),
        indices: top_k(&scores, k, true),
        degenerate,
    })
}

/// CSV of per-sample activations: `sample,dir_0,...,dir_{r-1}`.
pub fn write_activations_csv<W: Write>(w: W, u: &Array2<f64>, bundle: &DatasetBundle) -> Result<()> {
    let act = bundle.features.to_array().dot(&u.t());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["sample".to_string()];
    header.extend((0..u.nrows()).map(|d| format!("dir_{d}")));
    out.write_record(&header)?;
    for (i, row) in act.axis_iter(Axis(0)).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
