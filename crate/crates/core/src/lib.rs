//! Explains a blackbox classifier's predictions as the sum of a sparse linear model over
//! labelled binary attributes and a low-rank linear model over the classifier's own
//! features, and measures what each part accounts for.
//!
//! The pipeline, given a [`DatasetBundle`]:
//!
//! 1. [`attr::fit_attribute_model`] fits the L1-penalized attribute surrogate; the
//!    penalty can be picked with [`attr::lambda_sweep`] + [`attr::select_knee`].
//! 2. [`residual::compute_r_all`] finds the rank features alone need to reach the
//!    [`metrics::upper_bound`]; [`residual::choose_rank`] subtracts the attribute count.
//! 3. [`residual::fit_residual`] learns `U^T V` on top of the frozen attribute logits.
//!
//! [`pipeline::fit_explanation`] runs all three with automatic choices.
//! [`subspace`] covers multi-head subspaces, attribute purging and direction probes.

pub mod attr;
pub mod cli;
pub mod data;
pub mod error;
pub mod explanation;
pub mod fmx;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod residual;
pub mod seed;
pub mod solver;
pub mod split;
pub mod subspace;
pub mod synth;

pub use attr::{AttributeExplanation, LambdaPath};
pub use data::{AttributeMatrix, DatasetBundle, FeatureMatrix, PredictionVector};
pub use error::{Error, Result};
pub use explanation::{Explanation, SplitFidelity};
pub use residual::{LowRankResidual, ResidualOptions};
pub use split::{make_splits, Split, SplitAssignment};
