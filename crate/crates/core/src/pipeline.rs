//! The end-to-end fit: attribute model (fixed lambda or knee), upper bound, r_all and
//! rank choice, then the residual.

use std::str::FromStr;

use serde::Serialize;

use crate::attr::{self, AttributeExplanation, LambdaPath};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::explanation::{Explanation, ExplanationConfig};
use crate::metrics::{self, FidelityReport};
use crate::residual::{self, RallOptions, RallResult, ResidualOptions};
use crate::seed::derive_seed;

/// `auto` (knee of the default grid) or a fixed positive value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaChoice {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(LambdaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaChoice::Fixed(v)),
            _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
        }
    }
}

/// `auto` (from r_all and the attribute count) or a fixed rank; 0 means attribute-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RankChoice {
    Auto,
    Fixed(usize),
}

impl FromStr for RankChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(RankChoice::Auto);
        }
        s.parse::<usize>()
            .map(RankChoice::Fixed)
            .map_err(|_| format!("expected \"auto\" or a non-negative integer, got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub lambda: LambdaChoice,
    pub rank: RankChoice,
    /// Master seed; the r_all search and the final residual get derived seeds.
    pub seed: u64,
    pub eps: f64,
    pub rank_cap: Option<usize>,
    /// Training options; `seed` is ignored in favour of the derived ones.
    pub residual: ResidualOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: LambdaChoice::Auto,
            rank: RankChoice::Auto,
            seed: 0,
            eps: 0.01,
            rank_cap: None,
            residual: ResidualOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub explanation: Explanation,
    pub report: FidelityReport,
    /// The sweep behind the knee, when the lambda was chosen automatically.
    pub lambda_path: Option<LambdaPath>,
    pub r_all: Option<RallResult>,
    pub r_a: usize,
    pub rank: usize,
}

/// The attribute model for `choice`, plus the sweep when the knee was used.
pub fn attribute_model(bundle: &DatasetBundle, choice: LambdaChoice) -> Result<(AttributeExplanation, Option<LambdaPath>)> {
    match choice {
        LambdaChoice::Fixed(l) => Ok((attr::fit_attribute_model(bundle, l)?, None)),
        LambdaChoice::Auto => {
            let grid = attr::default_grid(bundle)?;
            let path = attr::lambda_sweep(bundle, &grid)?;
            for (l, msg) in &path.failures {
                log::warn!("lambda {l} failed: {msg}");
            }
            let knee = attr::select_knee(&path)?;
            let expl = path.explanation_for(knee).cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("knee lambda {knee} has no fitted explanation"))
            })?;
            Ok((expl, Some(path)))
        }
    }
}

pub fn fit_explanation(bundle: &DatasetBundle, cfg: &FitConfig) -> Result<FitOutcome> {
    let (attr_model, lambda_path) = attribute_model(bundle, cfg.lambda)?;
    let r_a = attr_model.nonzero_count();
    let probe = metrics::upper_bound_probe(bundle)?;

    let (rank, r_all) = match cfg.rank {
        RankChoice::Fixed(r) => (r, None),
        RankChoice::Auto => {
            let opts = RallOptions {
                eps: cfg.eps,
                cap: cfg.rank_cap,
                residual: ResidualOptions {
                    seed: derive_seed(cfg.seed, "r_all", 0),
                    ..cfg.residual
                },
            };
            let res = residual::compute_r_all_against(bundle, probe.fidelity.val, &opts)?;
            (residual::choose_rank(res.r_all, r_a), Some(res))
        }
    };

    let residual = if rank == 0 {
        None
    } else {
        let opts = ResidualOptions {
            seed: derive_seed(cfg.seed, "residual", 0),
            ..cfg.residual
        };
        Some(residual::fit_residual(bundle, &attr_model, rank, &opts)?)
    };

    let mut explanation = Explanation::new(attr_model, residual);
    explanation.config = ExplanationConfig {
        lambda_selection: match cfg.lambda {
            LambdaChoice::Auto => "knee".into(),
            LambdaChoice::Fixed(_) => "fixed".into(),
        },
        rank_selection: match cfg.rank {
            RankChoice::Auto => "r_all".into(),
            RankChoice::Fixed(_) => "fixed".into(),
        },
        seed: cfg.seed,
        r_all: r_all.as_ref().map(|r| r.r_all),
    };
    let report = metrics::fidelity_report(&explanation, bundle, &probe)?;
    explanation.fidelity = Some(report.fidelity);
    Ok(FitOutcome {
        explanation,
        report,
        lambda_path,
        r_all,
        r_a,
        rank,
    })
}
