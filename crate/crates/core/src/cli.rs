//! Command-line surface. Each subcommand reads a manifest, writes its artifacts to
//! `--out`, and echoes its flags to `config.json` there.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::attr::{self, AttributeExplanation, LambdaPath};
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::explanation::Explanation;
use crate::fmx::{Dtype, FmxMatrix, Payload};
use crate::manifest::{HeadSpec, Manifest, SplitSpec};
use crate::metrics;
use crate::pipeline::{self, attribute_model, FitConfig};
pub use crate::pipeline::{LambdaChoice, RankChoice};
use crate::residual::{self, RallResult, ResidualOptions};
use crate::seed::derive_seed;
use crate::split::Split;
use crate::subspace::{self, HeadSet, PurgeOptions, PurgeOrder};
use crate::synth::{self, PlantedConfig};

#[derive(Debug, Parser)]
#[command(name = "lrx", version, about = "Attribute + low-rank explanations of blackbox classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fit an explanation: attribute model, then a low-rank residual.
    Fit(FitArgs),
    /// Fidelity curves over a lambda grid and/or a list of ranks.
    Sweep(SweepArgs),
    /// Rank samples along learned directions and score them against attributes.
    Probe(ProbeArgs),
    /// Learn one projection shared by several heads and compare it to random ones.
    Shared(SharedArgs),
    /// Remove linearly decodable attribute information by null-space projection.
    Purge(PurgeArgs),
    /// Check that a bundle of FMX files and its manifest are consistent.
    ExtractValidate(ValidateArgs),
    /// Write a synthetic bundle with planted structure.
    Generate(GenerateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Sweep(_) => "sweep",
            Command::Probe(_) => "probe",
            Command::Shared(_) => "shared",
            Command::Purge(_) => "purge",
            Command::ExtractValidate(_) => "extract-validate",
            Command::Generate(_) => "generate",
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        match self {
            Command::Fit(a) => Some(&a.out),
            Command::Sweep(a) => Some(&a.out),
            Command::Probe(a) => Some(&a.out),
            Command::Shared(a) => Some(&a.out),
            Command::Purge(a) => Some(&a.out),
            Command::ExtractValidate(a) => a.out.as_deref(),
            Command::Generate(a) => Some(&a.out),
        }
    }

    pub fn manifest(&self) -> Option<&Path> {
        match self {
            Command::Fit(a) => Some(&a.manifest),
            Command::Sweep(a) => Some(&a.manifest),
            Command::Probe(a) => Some(&a.manifest),
            Command::Shared(a) => Some(&a.manifest),
            Command::Purge(a) => Some(&a.manifest),
            Command::ExtractValidate(a) => Some(&a.manifest),
            Command::Generate(_) => None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Adam learning rate for the residual.
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Mini-batch size; full-batch when omitted.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

impl TrainArgs {
    fn options(&self, seed: u64) -> ResidualOptions {
        ResidualOptions {
            learning_rate: self.lr,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            seed,
            ..ResidualOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// L1 strength, or `auto` for the knee of the default grid.
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaChoice,
    /// Residual rank, or `auto` to derive it from r_all and the attribute count.
    #[arg(long, default_value = "auto")]
    pub rank: RankChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fidelity slack below the upper bound when searching r_all.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Largest rank tried for r_all; defaults to min(D, C).
    #[arg(long)]
    pub rank_cap: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated ranks (0 = attribute-only).
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    /// Comma-separated lambdas, strictly decreasing; the default grid when neither
    /// `--lambdas` nor `--ranks` is given.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    /// Attribute model under the rank sweep.
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaChoice,
    /// Fit lambda points independently and in parallel instead of warm-starting.
    #[arg(long)]
    pub cold_start: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Explanation JSON whose residual `U` (and `V`) to probe.
    #[arg(long, conflicts_with = "projection", required_unless_present = "projection")]
    pub explanation: Option<PathBuf>,
    /// An r x D FMX matrix of directions instead of an explanation.
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// Samples listed per direction end.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SharedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub ranks: Vec<usize>,
    /// Random projections averaged per rank for the baseline.
    #[arg(long, default_value_t = 5)]
    pub baselines: usize,
    /// Per-head attribute model.
    #[arg(long, default_value = "auto")]
    pub lambda: LambdaChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderArg {
    Frequency,
    Index,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PurgeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// AUC threshold in (0.5, 1).
    #[arg(long)]
    pub t: f64,
    #[arg(long, value_enum, default_value = "frequency")]
    pub order: OrderArg,
    /// Projection cap per attribute.
    #[arg(long, default_value_t = 20)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also write the summary to `validation.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerateKind {
    /// Single head over a planted latent plus attributes.
    Planted,
    /// Several heads over one planted latent.
    Heads,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "planted")]
    pub kind: GenerateKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10000)]
    pub samples: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    /// Number of heads for `--kind heads`.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
}

/// Runs one command, writing `config.json` first.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(out) = cli.command.out_dir() {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let echo = json!({
            "command": cli.command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "args": &cli.command,
        });
        write_json(&out.join("config.json"), &echo)?;
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Shared(a) => cmd_shared(a),
        Command::Purge(a) => cmd_purge(a),
        Command::ExtractValidate(a) => cmd_extract_validate(a).map(|_| ()),
        Command::Generate(a) => cmd_generate(a).map(|_| ()),
    }
}

/// 1 for numeric failures, 2 for everything caused by the inputs.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        1
    } else {
        2
    }
}

pub fn error_json(cmd: &Command, e: &Error) -> serde_json::Value {
    let mut context = serde_json::Map::new();
    context.insert("command".into(), json!(cmd.name()));
    if let Some(m) = cmd.manifest() {
        context.insert("manifest".into(), json!(m));
    }
    if let Error::Io { path, .. } = e {
        context.insert("path".into(), json!(path));
    }
    json!({ "kind": e.kind(), "message": e.to_string(), "context": context })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish_csv(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn matrix_to_fmx(m: &Array2<f64>) -> Result<FmxMatrix> {
    FmxMatrix::new(m.nrows(), m.ncols(), Payload::F32(m.iter().map(|&v| v as f32).collect()))
}

fn fmx_to_matrix(m: &FmxMatrix) -> Result<Array2<f64>> {
    let Payload::F32(v) = &m.payload else {
        return Err(Error::DtypeMismatch {
            expected: Dtype::F32.name(),
            found: m.dtype().name(),
        });
    };
    Array2::from_shape_vec((m.rows, m.cols), v.iter().map(|&x| x as f64).collect())
        .map_err(|e| Error::Shape(e.to_string()))
}

fn write_lambda_csv(path: &Path, path_: &LambdaPath) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["lambda1", "nonzero_count", "fidelity_val", "converged"])?;
    for p in &path_.points {
        w.write_record([
            p.lambda1.to_string(),
            p.nonzero_count.to_string(),
            p.fidelity_val.to_string(),
            p.converged.to_string(),
        ])?;
    }
    finish_csv(w, path)
}

#[derive(Debug, Serialize)]
struct FitMetrics {
    lambda1: Option<f64>,
    lambda_selection: String,
    r_a: usize,
    rank: usize,
    rank_selection: String,
    r_all: Option<RallResult>,
    attribute_converged: bool,
    #[serde(flatten)]
    report: metrics::FidelityReport,
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let bundle = Manifest::load(&a.manifest)?.load_bundle()?;
    let cfg = FitConfig {
        lambda: a.lambda,
        rank: a.rank,
        seed: a.seed,
        eps: a.eps,
        rank_cap: a.rank_cap,
        residual: a.train.options(a.seed),
    };
    let out = pipeline::fit_explanation(&bundle, &cfg)?;
    if let Some(p) = &out.lambda_path {
        write_lambda_csv(&a.out.join("lambda_path.csv"), p)?;
    }

    let p = a.out.join("rank_log.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["rank", "fidelity_val"])?;
    if let Some(res) = &out.r_all {
        for (r, f) in &res.tried {
            w.write_record([r.to_string(), f.to_string()])?;
        }
    }
    finish_csv(w, &p)?;

    if let Some(res) = &out.explanation.residual {
        let p = a.out.join("training_log.csv");
        let mut w = csv_writer(&p)?;
        w.write_record(["epoch", "train_fidelity", "val_fidelity"])?;
        for e in &res.log {
            w.write_record([e.epoch.to_string(), e.train_fidelity.to_string(), e.val_fidelity.to_string()])?;
        }
        finish_csv(w, &p)?;
    }

    let expl = &out.explanation;
    expl.save(a.out.join("explanation.json"))?;
    let tpr_path = a.out.join("tpr.csv");
    let f = File::create(&tpr_path).map_err(|e| Error::io(&tpr_path, e))?;
    metrics::write_tpr_csv(BufWriter::new(f), bundle.class_names(), &out.report.tpr_test)?;

    let m = FitMetrics {
        lambda1: Some(expl.attr.lambda1).filter(|l| l.is_finite()),
        lambda_selection: expl.config.lambda_selection.clone(),
        r_a: out.r_a,
        rank: out.rank,
        rank_selection: expl.config.rank_selection.clone(),
        r_all: out.r_all.clone(),
        attribute_converged: expl.attr.converged,
        report: out.report.clone(),
    };
    write_json(&a.out.join("metrics.json"), &m)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let bundle = Manifest::load(&a.manifest)?.load_bundle()?;
    if !a.lambdas.is_empty() || a.ranks.is_empty() {
        let grid = if a.lambdas.is_empty() {
            attr::default_grid(&bundle)?
        } else {
            a.lambdas.clone()
        };
        let mode = if a.cold_start {
            attr::SweepMode::ColdParallel
        } else {
            attr::SweepMode::WarmStart
        };
        let path = attr::lambda_sweep_with(&bundle, &grid, &attr::AttrFitOptions::default(), mode)?;
        for (l, msg) in &path.failures {
            log::warn!("lambda {l} failed: {msg}");
        }
        write_lambda_csv(&a.out.join("lambda_sweep.csv"), &path)?;
    }
    if !a.ranks.is_empty() {
        let (attr_model, _) = attribute_model(&bundle, a.lambda)?;
        let opts = a.train.options(derive_seed(a.seed, "sweep", 0));
        let sweep = residual::rank_sweep(&bundle, &attr_model, &a.ranks, &opts)?;
        for (r, msg) in &sweep.failures {
            log::warn!("rank {r} failed: {msg}");
        }
        let p = a.out.join("rank_sweep.csv");
        let mut w = csv_writer(&p)?;
        let mut header = vec!["rank".to_string(), "fidelity_test".to_string()];
        header.extend(bundle.class_names().iter().map(|c| format!("tpr_{c}")));
        w.write_record(&header)?;
        for e in &sweep.entries {
            let mut rec = vec![e.rank.to_string(), e.fidelity_test.to_string()];
            rec.extend(e.tpr.iter().map(|t| opt_str(*t)));
            w.write_record(&rec)?;
        }
        finish_csv(w, &p)?;
    }
    Ok(())
}

pub fn cmd_probe(a: &ProbeArgs) -> Result<()> {
    let bundle = Manifest::load(&a.manifest)?.load_bundle()?;
    let (u, v) = match (&a.explanation, &a.projection) {
        (Some(path), _) => {
            let expl = Explanation::load(path)?;
            let res = expl
                .residual
                .ok_or_else(|| Error::InvalidArgument("explanation has no residual to probe".into()))?;
            (res.u, Some(res.v))
        }
        (None, Some(path)) => (fmx_to_matrix(&FmxMatrix::read(path)?)?, None),
        (None, None) => return Err(Error::InvalidArgument("need --explanation or --projection".into())),
    };
    let mut report = subspace::probe_directions(&u, &bundle, a.k)?;
    if let Some(v) = &v {
        report.class_rankings = (0..bundle.n_classes())
            .map(|c| subspace::per_class_activation_ranking(&u, v, &bundle, c, a.k))
            .collect::<Result<_>>()?;
    }
    write_json(&a.out.join("probe_report.json"), &report)?;
    let p = a.out.join("activations.csv");
    let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
    subspace::write_activations_csv(BufWriter::new(f), &u, &bundle)
}

fn head_models(set: &HeadSet, choice: LambdaChoice) -> Result<Vec<AttributeExplanation>> {
    (0..set.heads.len())
        .map(|j| {
            let b = set.bundle(j)?;
            if b.predictions.observed_classes() < 2 {
                // dropped later; keep the slot aligned
                return AttributeExplanation::intercept_only(&b);
            }
            Ok(attribute_model(&b, choice)?.0)
        })
        .collect()
}

pub fn cmd_shared(a: &SharedArgs) -> Result<()> {
    let set = Manifest::load(&a.manifest)?.load_head_set()?;
    if set.heads.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 heads, got {}",
            set.heads.len()
        )));
    }
    if a.ranks.is_empty() || a.ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks must be positive".into()));
    }
    let attrs = head_models(&set, a.lambda)?;
    let d = set.features.cols();
    let expl_dir = a.out.join("explanations");
    std::fs::create_dir_all(&expl_dir).map_err(|e| Error::io(&expl_dir, e))?;

    let p = a.out.join("baseline_comparison.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["rank", "learned_test", "random_mean_test", "random_min_test", "random_max_test"])?;
    let mut dropped = Vec::new();
    for &rank in &a.ranks {
        let opts = a.train.options(derive_seed(a.seed, "shared", rank as u64));
        let fit = subspace::fit_shared_subspace(&set, &attrs, rank, &opts)?;
        dropped = fit.dropped.clone();
        let learned = fit.mean_fidelity(&set, Split::Test)?;
        matrix_to_fmx(&fit.u)?.write(a.out.join(format!("shared_u_rank{rank}.fmx")))?;
        for h in &fit.heads {
            let mut e = fit.explanation(h);
            let b = set.bundle(h.index)?;
            e.config.seed = a.seed;
            e.fidelity = Some(metrics::split_fidelity(&e, &b)?);
            e.save(expl_dir.join(format!("rank{rank}_{}.json", h.name)))?;
        }
        let mut random = Vec::with_capacity(a.baselines);
        for b in 0..a.baselines {
            let u = subspace::random_projection(d, rank, derive_seed(a.seed, "random-projection", (rank * 1000 + b) as u64))?;
            let opts = a.train.options(derive_seed(a.seed, "random-heads", (rank * 1000 + b) as u64));
            random.push(subspace::fit_heads_with_projection(&set, &attrs, &u, &opts)?.mean_fidelity(&set, Split::Test)?);
        }
        let mean = random.iter().sum::<f64>() / random.len().max(1) as f64;
        let min = random.iter().copied().fold(f64::INFINITY, f64::min);
        let max = random.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            rank.to_string(),
            learned.to_string(),
            mean.to_string(),
            if random.is_empty() { String::new() } else { min.to_string() },
            if random.is_empty() { String::new() } else { max.to_string() },
        ])?;
    }
    finish_csv(w, &p)?;
    write_json(
        &a.out.join("shared_summary.json"),
        &json!({
            "heads": set.heads.iter().map(|h| &h.name).collect::<Vec<_>>(),
            "dropped": dropped,
        }),
    )
}

pub fn cmd_purge(a: &PurgeArgs) -> Result<()> {
    let bundle = Manifest::load(&a.manifest)?.load_bundle()?;
    let train = bundle.split_data(Split::Train)?;
    let attrs = bundle.attributes.to_array();
    let train_attrs = crate::data::AttributeMatrix::new(
        train.indices.len(),
        bundle.n_attributes(),
        train
            .indices
            .iter()
            .flat_map(|&i| attrs.row(i).iter().map(|&v| v as u8).collect::<Vec<_>>())
            .collect(),
        bundle.attribute_names().to_vec(),
    )?;
    let opts = PurgeOptions {
        order: match a.order {
            OrderArg::Frequency => PurgeOrder::Frequency,
            OrderArg::Index => PurgeOrder::Index,
        },
        max_iterations: a.max_iterations,
        seed: derive_seed(a.seed, "purge", 0),
        ..PurgeOptions::default()
    };
    let result = subspace::purge_attributes(&train.features, &train_attrs, a.t, &opts)?;
    matrix_to_fmx(&result.u)?.write(a.out.join("purge_u.fmx"))?;

    let p = a.out.join("purge_log.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["step", "pass", "attribute", "auc", "projected"])?;
    for (i, s) in result.steps.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.pass.to_string(),
            bundle.attribute_names()[s.attribute].clone(),
            s.auc.to_string(),
            s.projected.to_string(),
        ])?;
    }
    finish_csv(w, &p)?;

    let projected = train.features.dot(&result.u.t());
    let after = subspace::probe_auc(&projected, &train_attrs, &opts);
    write_json(
        &a.out.join("purge_summary.json"),
        &json!({
            "t": a.t,
            "input_dimension": bundle.n_features(),
            "removed": result.removed.nrows(),
            "remaining_dimension": result.u.nrows(),
            "passes": result.passes,
            "dimension_exhausted": result.dimension_exhausted,
            "attributes": result.attributes,
            "final_probe_auc": after,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileCheck {
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
    pub dtype: &'static str,
}

fn check_file(manifest: &Manifest, p: &Path, want: Dtype) -> Result<FileCheck> {
    let path = manifest.resolve(p);
    let m = FmxMatrix::read(&path)?;
    if m.dtype() != want {
        return Err(Error::DtypeMismatch {
            expected: want.name(),
            found: m.dtype().name(),
        });
    }
    Ok(FileCheck {
        path,
        rows: m.rows,
        cols: m.cols,
        dtype: m.dtype().name(),
    })
}

/// Loads and validates every file a manifest names, insisting on the canonical dtypes
/// (features f32, attributes u8, predictions u32).
pub fn cmd_extract_validate(a: &ValidateArgs) -> Result<serde_json::Value> {
    let manifest = Manifest::load(&a.manifest)?;
    let mut files = vec![
        check_file(&manifest, &manifest.features, Dtype::F32)?,
        check_file(&manifest, &manifest.attributes, Dtype::U8)?,
    ];
    if let Some(p) = &manifest.predictions {
        files.push(check_file(&manifest, p, Dtype::U32)?);
    }
    for h in &manifest.heads {
        files.push(check_file(&manifest, &h.predictions, Dtype::U32)?);
    }
    let (n, heads) = if manifest.heads.is_empty() {
        let b = manifest.load_bundle()?;
        (b.n_samples(), 1)
    } else {
        let s = manifest.load_head_set()?;
        (s.features.rows(), s.heads.len())
    };
    let summary = json!({
        "valid": true,
        "samples": n,
        "features": files[0].cols,
        "attributes": manifest.attribute_names.len(),
        "heads": heads,
        "files": files,
    });
    println!("{}", serde_json::to_string(&summary)?);
    if let Some(out) = &a.out {
        write_json(&out.join("validation.json"), &summary)?;
    }
    Ok(summary)
}

fn write_common(dir: &Path, features: &crate::data::FeatureMatrix, attributes: &crate::data::AttributeMatrix, split: &crate::split::SplitAssignment) -> Result<()> {
    features.to_fmx().write(dir.join("features.fmx"))?;
    attributes.to_fmx().write(dir.join("attributes.fmx"))?;
    split.to_fmx().write(dir.join("split.fmx"))
}

/// Writes `bundle` as FMX files plus `manifest.json` into `dir`; returns the manifest path.
pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_common(dir, &bundle.features, &bundle.attributes, &bundle.split)?;
    bundle.predictions.to_fmx().write(dir.join("predictions.fmx"))?;
    let m = Manifest {
        features: "features.fmx".into(),
        attributes: "attributes.fmx".into(),
        predictions: Some("predictions.fmx".into()),
        attribute_names: bundle.attribute_names().to_vec(),
        class_names: bundle.class_names().to_vec(),
        heads: Vec::new(),
        split: SplitSpec::Tags { tags: "split.fmx".into() },
        min_attribute_count: None,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    m.save(&path)?;
    Ok(path)
}

/// Multi-head counterpart of [`write_bundle`].
pub fn write_head_set(dir: &Path, set: &HeadSet) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_common(dir, &set.features, &set.attributes, &set.split)?;
    let mut heads = Vec::new();
    for h in &set.heads {
        let file = format!("{}.fmx", h.name);
        h.predictions.to_fmx().write(dir.join(&file))?;
        heads.push(HeadSpec {
            name: h.name.clone(),
            predictions: file.into(),
            class_names: h.predictions.class_names().to_vec(),
        });
    }
    let m = Manifest {
        features: "features.fmx".into(),
        attributes: "attributes.fmx".into(),
        predictions: None,
        attribute_names: set.attributes.names().to_vec(),
        class_names: Vec::new(),
        heads,
        split: SplitSpec::Tags { tags: "split.fmx".into() },
        min_attribute_count: None,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    m.save(&path)?;
    Ok(path)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<PathBuf> {
    let cfg = PlantedConfig {
        n_samples: a.samples,
        n_classes: a.classes,
        seed: a.seed,
        ..PlantedConfig::default()
    };
    match a.kind {
        GenerateKind::Planted => write_bundle(&a.out, &synth::planted_bundle(&cfg)?.bundle),
        GenerateKind::Heads => {
            let cfg = PlantedConfig { latent_rank: 2, ..cfg };
            write_head_set(&a.out, &synth::planted_head_set(&cfg, a.heads, a.classes)?.0)
        }
    }
}
