//! Dataset manifests: JSON documents naming the matrix files and their labels.
//!
//! ```json
//! {
//!   "features": "features.fmx",
//!   "attributes": "attributes.fmx",
//!   "predictions": "predictions.fmx",
//!   "attribute_names": ["sky", "floor"],
//!   "class_names": ["indoor", "outdoor"],
//!   "split": {"seed": 0, "fractions": [0.6, 0.2, 0.2]}
//! }
//! ```
//!
//! `split` may instead be `{"tags": "split.fmx"}`. Multi-head manifests replace
//! `predictions`/`class_names` with `"heads": [{"name", "predictions", "class_names"}]`.
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_attributes, load_features, load_predictions, AttributeMatrix, DatasetBundle};
use crate::error::{Error, Result};
use crate::fmx::{Dtype, FmxMatrix};
use crate::split::{make_splits, SplitAssignment, DEFAULT_FRACTIONS};
use crate::subspace::{Head, HeadSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Tags {
        tags: PathBuf,
    },
    Seeded {
        seed: u64,
        #[serde(default = "default_fractions")]
        fractions: [f64; 3],
    },
}

fn default_fractions() -> [f64; 3] {
    DEFAULT_FRACTIONS
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Seeded {
            seed: 0,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub predictions: PathBuf,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub features: PathBuf,
    pub attributes: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    pub attribute_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heads: Vec<HeadSpec>,
    #[serde(default)]
    pub split: SplitSpec,
    /// Drop attributes with fewer positives than this over the whole dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_attribute_count: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn load_attributes(&self) -> Result<AttributeMatrix> {
        let a = load_attributes(self.resolve(&self.attributes), self.attribute_names.clone())?;
        match self.min_attribute_count {
            Some(min) => Ok(a.prune_rare(min)?.0),
            None => Ok(a),
        }
    }

    fn load_split(&self, n: usize) -> Result<SplitAssignment> {
        match &self.split {
            SplitSpec::Seeded { seed, fractions } => make_splits(n, *fractions, *seed),
            SplitSpec::Tags { tags } => SplitAssignment::from_fmx(FmxMatrix::read_any(self.resolve(tags), Dtype::U8)?),
        }
    }

    /// Loads a single-head bundle; validates alignment.
    pub fn load_bundle(&self) -> Result<DatasetBundle> {
        let predictions = self
            .predictions
            .as_ref()
            .ok_or_else(|| Error::Schema("manifest has no \"predictions\" entry".into()))?;
        let features = load_features(self.resolve(&self.features))?;
        let attributes = self.load_attributes()?;
        let predictions = load_predictions(self.resolve(predictions), self.class_names.clone())?;
        let split = self.load_split(features.rows())?;
        DatasetBundle::new(features, attributes, predictions, split)
    }

    /// Loads a multi-head set from `heads`.
    pub fn load_head_set(&self) -> Result<HeadSet> {
        if self.heads.is_empty() {
            return Err(Error::Schema("manifest has no \"heads\" entry".into()));
        }
        let features = load_features(self.resolve(&self.features))?;
        let attributes = self.load_attributes()?;
        let heads = self
            .heads
            .iter()
            .map(|h| {
                Ok(Head {
                    name: h.name.clone(),
                    predictions: load_predictions(self.resolve(&h.predictions), h.class_names.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let split = self.load_split(features.rows())?;
        HeadSet::new(features, attributes, heads, split)
    }
}
