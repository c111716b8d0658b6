use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lowrank_explain::attr::fit_attribute_model;
use lowrank_explain::cli::{write_bundle, write_head_set};
use lowrank_explain::data::{AttributeMatrix, FeatureMatrix, PredictionVector};
use lowrank_explain::fmx::{FmxMatrix, Payload};
use lowrank_explain::residual::{rank_sweep, ResidualOptions};
use lowrank_explain::seed::derive_seed;
use lowrank_explain::subspace::Head;
use lowrank_explain::synth::{planted_bundle, planted_head_set, PlantedConfig};
use lowrank_explain::{make_splits, DatasetBundle, Explanation};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use tempfile::TempDir;

fn lrx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrx")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn small_planted(dir: &Path, seed: u64) -> PathBuf {
    let b = planted_bundle(&PlantedConfig {
        n_samples: 1500,
        seed,
        ..Default::default()
    })
    .unwrap()
    .bundle;
    write_bundle(&dir.join("data"), &b).unwrap()
}

#[test]
fn fit_writes_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 0);
    let out = tmp.path().join("fit");
    ok(&lrx(&["fit", "--manifest", s(&manifest), "--out", s(&out)]));
    for f in [
        "config.json",
        "metrics.json",
        "explanation.json",
        "lambda_path.csv",
        "rank_log.csv",
        "training_log.csv",
        "tpr.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m = read_json(out.join("metrics.json"));
    assert_eq!(m["lambda_selection"], "knee");
    assert_eq!(m["rank_selection"], "r_all");
    let e = Explanation::load(out.join("explanation.json")).unwrap();
    assert_eq!(e.rank() as u64, m["rank"].as_u64().unwrap());
    let cfg = read_json(out.join("config.json"));
    assert_eq!(cfg["command"], "fit");
}

#[test]
fn default_planted_fit_is_faithful() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("gen");
    ok(&lrx(&["generate", "--out", s(&data)]));
    let out = tmp.path().join("fit");
    ok(&lrx(&["fit", "--manifest", s(&data.join("manifest.json")), "--out", s(&out)]));
    let m = read_json(out.join("metrics.json"));
    let test = m["fidelity"]["test"].as_f64().unwrap();
    assert!(test >= 0.95, "{test}");
}

#[test]
fn fit_with_rank_zero_has_no_residual() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 1);
    let out = tmp.path().join("fit");
    ok(&lrx(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--rank", "0", "--lambda", "0.01"]));
    let e = Explanation::load(out.join("explanation.json")).unwrap();
    assert!(e.residual.is_none());
    assert!(!out.join("training_log.csv").exists());
    let m = read_json(out.join("metrics.json"));
    assert_eq!(m["rank"], 0);
    assert_eq!(m["lambda_selection"], "fixed");
}

#[test]
fn fit_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 2);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&lrx(&["fit", "--manifest", s(&manifest), "--out", s(out), "--seed", "3"]));
    }
    for f in ["metrics.json", "explanation.json", "lambda_path.csv", "rank_log.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 0);
    std::fs::remove_file(tmp.path().join("data/features.fmx")).unwrap();
    let out = tmp.path().join("fit");
    let res = lrx(&["fit", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let stderr: Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(stderr["kind"], "io");
    assert_eq!(read_json(out.join("error.json")), stderr);
    assert!(stderr["context"]["path"].as_str().unwrap().ends_with("features.fmx"));
}

#[test]
fn bad_flags_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 0);
    let out = tmp.path().join("x");
    let res = lrx(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--lambda", "-1"]);
    assert_eq!(res.status.code(), Some(2));
    let res = lrx(&["fit", "--manifest", s(&manifest), "--out", s(&out), "--eps", "0.5", "--lambda", "0.01"]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(read_json(out.join("error.json"))["kind"], "argument");
}

#[test]
fn sweeps_write_one_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 3);
    let out = tmp.path().join("sweep");
    ok(&lrx(&[
        "sweep", "--manifest", s(&manifest), "--out", s(&out), "--lambdas", "0.05", "--ranks", "0,2", "--lambda", "0.01",
    ]));
    let lam = std::fs::read_to_string(out.join("lambda_sweep.csv")).unwrap();
    assert_eq!(lam.lines().count(), 2);
    assert!(lam.starts_with("lambda1,nonzero_count,fidelity_val,converged\n"));
    let cold = tmp.path().join("cold");
    ok(&lrx(&["sweep", "--manifest", s(&manifest), "--out", s(&cold), "--lambdas", "0.05", "--cold-start"]));
    assert_eq!(std::fs::read_to_string(cold.join("lambda_sweep.csv")).unwrap(), lam);

    let mut r = csv::Reader::from_path(out.join("rank_sweep.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..3], ["rank", "fidelity_test", "tpr_class0"]);
    assert_eq!(header.len(), 2 + 8);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "0");
    assert_eq!(&rows[1][0], "2");
    let f: f64 = rows[1][1].parse().unwrap();
    assert!((0.0..=1.0).contains(&f));

    // the CSV reads back to exactly what the library computes
    let b = lowrank_explain::manifest::Manifest::load(&manifest).unwrap().load_bundle().unwrap();
    let attr = fit_attribute_model(&b, 0.01).unwrap();
    let opts = ResidualOptions {
        seed: derive_seed(0, "sweep", 0),
        ..Default::default()
    };
    let lib = rank_sweep(&b, &attr, &[0, 2], &opts).unwrap();
    for (row, e) in rows.iter().zip(&lib.entries) {
        assert_eq!(row[1].parse::<f64>().unwrap(), e.fidelity_test);
        for (cell, t) in row.iter().skip(2).zip(&e.tpr) {
            assert_eq!(cell.parse::<f64>().ok(), *t);
        }
    }
}

#[test]
fn probe_finds_a_planted_attribute_direction() {
    let tmp = TempDir::new().unwrap();
    let planted = planted_bundle(&PlantedConfig {
        n_samples: 1500,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let manifest = write_bundle(&tmp.path().join("data"), &planted.bundle).unwrap();
    let active = (0..planted.attribute_lift.nrows())
        .max_by(|&i, &j| {
            let n = |r: usize| planted.attribute_lift.row(r).dot(&planted.attribute_lift.row(r));
            n(i).total_cmp(&n(j))
        })
        .unwrap();
    let row = planted.attribute_lift.row(active);
    let norm = row.dot(&row).sqrt();
    let dir = FmxMatrix::new(1, row.len(), Payload::F32(row.iter().map(|&v| (v / norm) as f32).collect())).unwrap();
    let proj = tmp.path().join("dir.fmx");
    dir.write(&proj).unwrap();
    let out = tmp.path().join("probe");
    ok(&lrx(&["probe", "--manifest", s(&manifest), "--out", s(&out), "--projection", s(&proj), "--k", "5"]));
    let rep = read_json(out.join("probe_report.json"));
    let d = &rep["directions"][0];
    assert_eq!(d["best_attribute"], planted.bundle.attribute_names()[active].as_str());
    assert!(d["auc"].as_f64().unwrap() > 0.99, "{d}");
    assert!(rep.get("class_rankings").is_none());
}

#[test]
fn probe_is_byte_identical_and_checks_k() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 4);
    let fit = tmp.path().join("fit");
    ok(&lrx(&["fit", "--manifest", s(&manifest), "--out", s(&fit), "--lambda", "0.01", "--rank", "2"]));
    let expl = fit.join("explanation.json");
    let a = tmp.path().join("pa");
    let b = tmp.path().join("pb");
    for out in [&a, &b] {
        ok(&lrx(&["probe", "--manifest", s(&manifest), "--out", s(out), "--explanation", s(&expl), "--k", "5"]));
    }
    for f in ["probe_report.json", "activations.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let rep = read_json(a.join("probe_report.json"));
    assert_eq!(rep["directions"].as_array().unwrap().len(), 2);
    assert_eq!(rep["class_rankings"].as_array().unwrap().len(), 8);
    let act = std::fs::read_to_string(a.join("activations.csv")).unwrap();
    assert_eq!(act.lines().next().unwrap(), "sample,dir_0,dir_1");
    assert_eq!(act.lines().count(), 1501);

    let c = tmp.path().join("pc");
    let res = lrx(&["probe", "--manifest", s(&manifest), "--out", s(&c), "--explanation", s(&expl), "--k", "5000"]);
    assert_eq!(res.status.code(), Some(2));
}

fn heads_manifest(dir: &Path, m: usize, stuck: bool) -> PathBuf {
    let (mut set, _) = planted_head_set(
        &PlantedConfig {
            n_samples: 1500,
            latent_rank: 2,
            ..Default::default()
        },
        m,
        4,
    )
    .unwrap();
    if stuck {
        let names = set.heads[0].predictions.class_names().to_vec();
        set.heads.push(Head {
            name: "stuck".into(),
            predictions: PredictionVector::new(vec![1; 1500], names).unwrap(),
        });
    }
    write_head_set(&dir.join("heads"), &set).unwrap()
}

#[test]
fn shared_needs_two_heads() {
    let tmp = TempDir::new().unwrap();
    let manifest = heads_manifest(tmp.path(), 1, false);
    let out = tmp.path().join("shared");
    let res = lrx(&["shared", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = read_json(out.join("error.json"));
    assert!(err["message"].as_str().unwrap().contains("need >= 2 heads"));
}

#[test]
fn shared_drops_constant_heads_and_compares_to_random() {
    let tmp = TempDir::new().unwrap();
    let manifest = heads_manifest(tmp.path(), 2, true);
    let out = tmp.path().join("shared");
    ok(&lrx(&[
        "shared", "--manifest", s(&manifest), "--out", s(&out), "--ranks", "1,2", "--baselines", "2", "--lambda", "0.01",
        "--lr", "0.1",
    ]));
    let summary = read_json(out.join("shared_summary.json"));
    assert_eq!(summary["dropped"][0][0], "stuck");
    let mut r = csv::Reader::from_path(out.join("baseline_comparison.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let learned: f64 = row[1].parse().unwrap();
        let random: f64 = row[2].parse().unwrap();
        assert!(learned >= random, "{row:?}");
    }
    for rank in [1, 2] {
        assert!(out.join(format!("shared_u_rank{rank}.fmx")).exists());
        assert!(out.join(format!("explanations/rank{rank}_head0.json")).exists());
        assert!(!out.join(format!("explanations/rank{rank}_stuck.json")).exists());
    }
}

#[test]
fn purge_reports_each_attribute() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 5);
    let lax = tmp.path().join("lax");
    ok(&lrx(&["purge", "--manifest", s(&manifest), "--out", s(&lax), "--t", "0.999"]));
    let summary = read_json(lax.join("purge_summary.json"));
    assert_eq!(summary["attributes"].as_array().unwrap().len(), 10);
    assert!(summary["remaining_dimension"].as_u64().unwrap() >= 54);

    let strict = tmp.path().join("strict");
    ok(&lrx(&["purge", "--manifest", s(&manifest), "--out", s(&strict), "--t", "0.501"]));
    let summary = read_json(strict.join("purge_summary.json"));
    assert!(summary["removed"].as_u64().unwrap() >= 10);
    for auc in summary["final_probe_auc"].as_array().unwrap() {
        assert!(auc.as_f64().unwrap() < 0.501);
    }
    let log = std::fs::read_to_string(strict.join("purge_log.csv")).unwrap();
    assert!(log.starts_with("step,pass,attribute,auc,projected\n"));

    let res = lrx(&["purge", "--manifest", s(&manifest), "--out", s(&strict), "--t", "0.5"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn purge_logs_repeated_projections_for_a_redundant_attribute() {
    let tmp = TempDir::new().unwrap();
    let n = 2000;
    let mut g = lowrank_explain::seed::rng(3);
    let attrs: Vec<u8> = (0..n).map(|_| g.random_bool(0.5) as u8).collect();
    let x = Array2::from_shape_fn((n, 4), |(i, j)| {
        let sign = if attrs[i] == 1 { 1.0 } else { -1.0 };
        let noise: f64 = g.sample(StandardNormal);
        match j {
            0 => sign + 0.5 * noise,
            1 => sign + 2.0 * noise,
            _ => noise,
        }
    });
    let b = DatasetBundle::new(
        FeatureMatrix::from_array(&x).unwrap(),
        AttributeMatrix::new(n, 1, attrs, vec!["a0".into()]).unwrap(),
        PredictionVector::new(vec![0; n], vec!["c0".into(), "c1".into()]).unwrap(),
        make_splits(n, [0.6, 0.2, 0.2], 0).unwrap(),
    )
    .unwrap();
    let manifest = write_bundle(&tmp.path().join("data"), &b).unwrap();
    let out = tmp.path().join("purge");
    ok(&lrx(&["purge", "--manifest", s(&manifest), "--out", s(&out), "--t", "0.55"]));
    let mut r = csv::Reader::from_path(out.join("purge_log.csv")).unwrap();
    let projected = r
        .records()
        .map(|x| x.unwrap())
        .filter(|row| &row[2] == "a0" && &row[4] == "true")
        .count();
    assert!(projected >= 2, "{projected}");
}

#[test]
fn generated_bundles_validate() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("gen");
    ok(&lrx(&["generate", "--out", s(&data), "--samples", "300", "--classes", "3"]));
    let out = tmp.path().join("val");
    let res = lrx(&["extract-validate", "--manifest", s(&data.join("manifest.json")), "--out", s(&out)]);
    ok(&res);
    let summary: Value = serde_json::from_slice(res.stdout.trim_ascii()).unwrap();
    assert_eq!(summary["valid"], true);
    assert_eq!(summary["samples"], 300);
    assert_eq!(read_json(out.join("validation.json")), summary);

    let heads = tmp.path().join("heads");
    ok(&lrx(&["generate", "--out", s(&heads), "--kind", "heads", "--samples", "300", "--heads", "3"]));
    let res = lrx(&["extract-validate", "--manifest", s(&heads.join("manifest.json"))]);
    ok(&res);
    let summary: Value = serde_json::from_slice(res.stdout.trim_ascii()).unwrap();
    assert_eq!(summary["heads"], 3);
}

#[test]
fn validation_rejects_the_wrong_dtype() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_planted(tmp.path(), 0);
    // overwrite the u8 attributes with the f32 feature file
    std::fs::copy(tmp.path().join("data/features.fmx"), tmp.path().join("data/attributes.fmx")).unwrap();
    let res = lrx(&["extract-validate", "--manifest", s(&manifest)]);
    assert_eq!(res.status.code(), Some(2));
    let err: Value = serde_json::from_slice(res.stderr.trim_ascii()).unwrap();
    assert_eq!(err["kind"], "format");
}
