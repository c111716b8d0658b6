//! The combined explanation: attribute logits plus an optional low-rank residual,
//! and its JSON form.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::attr::AttributeExplanation;
use crate::error::{Error, Result};
use crate::linalg::argmax_rows;
use crate::residual::{EpochLog, LowRankResidual, ResidualOptions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitFidelity {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

/// How the explanation was produced, echoed into the JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationConfig {
    pub lambda_selection: String,
    pub rank_selection: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_all: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub attr: AttributeExplanation,
    pub residual: Option<LowRankResidual>,
    pub config: ExplanationConfig,
    pub fidelity: Option<SplitFidelity>,
}

impl Explanation {
    pub fn new(attr: AttributeExplanation, residual: Option<LowRankResidual>) -> Self {
        Explanation {
            attr,
            residual,
            config: ExplanationConfig::default(),
            fidelity: None,
        }
    }

    pub fn rank(&self) -> usize {
        self.residual.as_ref().map_or(0, |r| r.rank())
    }

    pub fn attribute_logits(&self, attributes: &Array2<f64>) -> Array2<f64> {
        self.attr.logits(attributes)
    }

    /// Zero when there is no residual.
    pub fn residual_logits(&self, features: &Array2<f64>) -> Array2<f64> {
        match &self.residual {
            Some(r) => r.logits(features),
            None => Array2::zeros((features.nrows(), self.attr.n_classes())),
        }
    }

    /// `W_A [A(x); 1] + V^T U f(x)` for every row.
    pub fn logits(&self, features: &Array2<f64>, attributes: &Array2<f64>) -> Array2<f64> {
        let mut z = self.attribute_logits(attributes);
        if let Some(r) = &self.residual {
            z += &r.logits(features);
        }
        z
    }

    pub fn predict(&self, features: &Array2<f64>, attributes: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.logits(features, attributes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ExplanationFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<ExplanationFile>(s)?.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassWeights {
    class: String,
    bias: f64,
    /// Nonzero weights only, as (attribute name, weight).
    weights: Vec<(String, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttributeSection {
    /// Absent for intercept-only models.
    lambda1: Option<f64>,
    nonzero_count: usize,
    converged: bool,
    iterations: usize,
    classes: Vec<ClassWeights>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResidualSection {
    rank: usize,
    seed: u64,
    options: ResidualOptions,
    best_epoch: usize,
    /// r rows of length D.
    u: Vec<Vec<f64>>,
    /// r rows of length C.
    v: Vec<Vec<f64>>,
    training_log: Vec<EpochLog>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExplanationFile {
    attribute_names: Vec<String>,
    class_names: Vec<String>,
    attribute: AttributeSection,
    residual: Option<ResidualSection>,
    config: ExplanationConfig,
    fidelity: Option<SplitFidelity>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<Array2<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Schema(format!("{what} rows must have length {cols}")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Schema(e.to_string()))
}

impl From<&Explanation> for ExplanationFile {
    fn from(e: &Explanation) -> Self {
        let a = &e.attr;
        let classes = (0..a.n_classes())
            .map(|c| ClassWeights {
                class: a.class_names[c].clone(),
                bias: a.bias(c),
                weights: (0..a.n_attributes())
                    .filter(|&k| a.weight(c, k) != 0.0)
                    .map(|k| (a.attribute_names[k].clone(), a.weight(c, k)))
                    .collect(),
            })
            .collect();
        ExplanationFile {
            attribute_names: a.attribute_names.clone(),
            class_names: a.class_names.clone(),
            attribute: AttributeSection {
                lambda1: a.lambda1.is_finite().then_some(a.lambda1),
                nonzero_count: a.nonzero_count(),
                converged: a.converged,
                iterations: a.iterations,
                classes,
            },
            residual: e.residual.as_ref().map(|r| ResidualSection {
                rank: r.rank(),
                seed: r.options.seed,
                options: r.options,
                best_epoch: r.best_epoch,
                u: rows(&r.u),
                v: rows(&r.v),
                training_log: r.log.clone(),
            }),
            config: e.config.clone(),
            fidelity: e.fidelity,
        }
    }
}

impl TryFrom<ExplanationFile> for Explanation {
    type Error = Error;

    fn try_from(f: ExplanationFile) -> Result<Self> {
        let k = f.attribute_names.len();
        let c = f.class_names.len();
        if f.attribute.classes.len() != c {
            return Err(Error::Schema(format!(
                "{} class weight entries for {c} classes",
                f.attribute.classes.len()
            )));
        }
        let mut weights = Array2::zeros((c, k + 1));
        for (ci, cw) in f.attribute.classes.iter().enumerate() {
            if cw.class != f.class_names[ci] {
                return Err(Error::Schema(format!(
                    "class entry {ci} is {:?}, expected {:?}",
                    cw.class, f.class_names[ci]
                )));
            }
            weights[[ci, k]] = cw.bias;
            for (name, w) in &cw.weights {
                let j = f
                    .attribute_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::Schema(format!("unknown attribute {name:?}")))?;
                weights[[ci, j]] = *w;
            }
        }
        let attr = AttributeExplanation {
            weights,
            lambda1: f.attribute.lambda1.unwrap_or(f64::INFINITY),
            attribute_names: f.attribute_names,
            class_names: f.class_names,
            converged: f.attribute.converged,
            iterations: f.attribute.iterations,
            objective: f64::NAN,
        };
        let residual = match f.residual {
            None => None,
            Some(r) => {
                let d = r.u.first().map_or(0, |row| row.len());
                let u = from_rows(&r.u, d, "u")?;
                let v = from_rows(&r.v, c, "v")?;
                if u.nrows() != r.rank || v.nrows() != r.rank {
                    return Err(Error::Schema(format!(
                        "rank {} but u has {} rows and v has {}",
                        r.rank,
                        u.nrows(),
                        v.nrows()
                    )));
                }
                Some(LowRankResidual {
                    u,
                    v,
                    options: ResidualOptions {
                        seed: r.seed,
                        ..r.options
                    },
                    log: r.training_log,
                    best_epoch: r.best_epoch,
                })
            }
        };
        Ok(Explanation {
            attr,
            residual,
            config: f.config,
            fidelity: f.fidelity,
        })
    }
}
