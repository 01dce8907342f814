mod common;

use std::fs;
use std::process::Command;

use common::cli::{code, dataset, ok, s, twice};

#[test]
fn every_subcommand_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = dataset(root);
    let gen = twice(root, "generate", &["generate", "--n", "100", "--p", "0.1", "--q", "0.2", "--seed", "5"]);
    assert!(gen.join("edges.csv").exists());

    let inspect = twice(root, "inspect", &["inspect", "--data", s(&data)]);
    assert!(fs::read_to_string(inspect.join("summary.json")).unwrap().contains("\"n\": 160"));

    let splits_dir = twice(root, "splits", &["splits", "--n-from", s(&data), "--k", "3", "--seed", "42"]);
    let splits = splits_dir.join("splits.json");
    let parsed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&splits).unwrap()).unwrap();
    assert_eq!(parsed["splits"].as_array().unwrap().len(), 3);

    let common = ["--data", s(&data), "--splits", s(&splits)];
    let quick = ["--hidden", "16", "--epochs", "12", "--patience", "4"];
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(quick);
    args.extend(["--variant", "extended", "--split", "1"]);
    let train = twice(root, "train", &args);
    for file in ["report.json", "history.csv", "checkpoint.json", "timing.json"] {
        assert!(train.join(file).exists(), "missing {file}");
    }
    assert!(fs::read_to_string(train.join("config_echo.json")).unwrap().contains("\"extended\""));
    assert!(fs::read_to_string(train.join("report.json")).unwrap().contains("\"variant\": \"extended\""));

    let mut args = vec!["tune"];
    args.extend(common);
    args.extend(quick);
    args.extend(["--grid", "large", "--tune-epochs", "6", "--tune-splits", "1", "--jobs", "2"]);
    let tune = twice(root, "tune", &args);
    let tune_file = tune.join("tune.json");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&tune_file).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), 8);

    let mut args = vec!["benchmark"];
    args.extend(common);
    args.extend(quick);
    args.extend(["--model", "mlp", "--from-tune", s(&tune_file)]);
    let bench = twice(root, "benchmark", &args);
    let csv = fs::read_to_string(bench.join("benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let bench_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bench.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(bench_json["test_accuracies"].as_array().unwrap().len(), 3);

    let csbm = twice(root, "csbm", &["csbm", "--n", "400", "--trials", "3", "--jobs", "2"]);
    let theorem = fs::read_to_string(csbm.join("theorem.json")).unwrap();
    assert!(theorem.contains("\"predicted\": -0.6"), "{theorem}");
    assert_eq!(fs::read_to_string(csbm.join("trials.csv")).unwrap().lines().count(), 4);
    let sweep = twice(root, "sweep", &["csbm", "--n", "400", "--trials", "2", "--sweep-ratio", "0.5,1,2,4,8"]);
    let sweep: serde_json::Value = serde_json::from_str(&fs::read_to_string(sweep.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 5);

    let ckpt = train.join("checkpoint.json");
    let diag = twice(root, "diagnose", &["diagnose", "--checkpoint", s(&ckpt), "--data", s(&data)]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(diag.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(report["layers"].as_array().unwrap().len(), 2);
    assert!(report["layers"][0]["auc"].is_f64());
    assert!(diag.join("cost_hist.csv").exists());
    let test_only = twice(
        root,
        "diagnose-test",
        &["diagnose", "--checkpoint", s(&ckpt), "--data", s(&data), "--splits", s(&splits), "--edges", "test"],
    );
    assert!(test_only.join("diagnostics.json").exists());
}

#[test]
fn parallel_runs_match_serial_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let run = |jobs: &str| {
        let out = tmp.path().join(format!("bench-{jobs}"));
        ok(&["benchmark", "--data", s(&data), "--hidden", "16", "--epochs", "8", "--patience", "3", "--jobs", jobs, "--out", s(&out)]);
        fs::read(out.join("benchmark.json")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
    let trials = |jobs: &str| {
        let out = tmp.path().join(format!("csbm-{jobs}"));
        ok(&["csbm", "--n", "300", "--trials", "4", "--jobs", jobs, "--out", s(&out)]);
        fs::read(out.join("trials.csv")).unwrap()
    };
    assert_eq!(trials("1"), trials("3"));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = dataset(root);
    let out = root.join("x");

    let (c, err) = code(&["train", "--data", s(&data), "--model", "gat", "--out", s(&out)]);
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("gat"));
    let (c, err) = code(&["splits", "--n", "50", "--ratios", "0.5,0.3,0.3", "--out", s(&out)]);
    assert_eq!(c, 2);
    assert!(err.contains("--ratios"), "{err}");
    let (c, err) = code(&["splits", "--n", "50", "--ratios", "0.5,0.5", "--out", s(&out)]);
    assert_eq!(c, 2);
    assert!(err.contains("--ratios"), "{err}");
    let (c, err) = code(&["csbm", "--p", "1.0", "--out", s(&out)]);
    assert_eq!(c, 2);
    assert!(err.contains("--p"), "{err}");
    assert_eq!(code(&["csbm", "--q", "0", "--out", s(&out)]).0, 2);
    assert_eq!(code(&["train", "--data", s(&data), "--no-such-flag"]).0, 2);
    assert_eq!(code(&["train", "--data", s(&root.join("missing")), "--out", s(&out)]).0, 3);
    assert_eq!(code(&["inspect", "--data", s(&root.join("missing")), "--out", s(&out)]).0, 3);
    assert_eq!(code(&["benchmark", "--data", s(&data), "--splits", s(&root.join("none.json")), "--out", s(&out)]).0, 3);
    assert_eq!(code(&[]).0, 2);
}

#[test]
fn diagnose_handles_baselines_and_mismatches() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = dataset(root);
    let mlp = root.join("mlp");
    ok(&["train", "--data", s(&data), "--model", "mlp", "--hidden", "8", "--epochs", "3", "--patience", "1", "--out", s(&mlp)]);
    let diag = root.join("diag");
    let stdout = ok(&["diagnose", "--checkpoint", s(&mlp.join("checkpoint.json")), "--data", s(&data), "--out", s(&diag)]);
    assert!(stdout.contains("no edge routing"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(diag.join("diagnostics.json")).unwrap()).unwrap();
    assert!(report["layers"].as_array().unwrap().is_empty());
    assert!(report["histogram"].is_null());

    let other = root.join("other");
    ok(&["generate", "--n", "100", "--p", "0.1", "--q", "0.2", "--dim", "5", "--out", s(&other)]);
    let (c, err) = code(&["diagnose", "--checkpoint", s(&mlp.join("checkpoint.json")), "--data", s(&other), "--out", s(&diag)]);
    assert_ne!(c, 0);
    assert!(err.contains("features"), "{err}");
}

#[test]
fn help_lists_every_flag() {
    let top = ok(&["--help"]);
    for sub in ["inspect", "splits", "generate", "train", "tune", "benchmark", "csbm", "diagnose"] {
        assert!(top.contains(sub), "top-level help lacks {sub}");
    }
    let train = ok(&["train", "--help"]);
    for flag in [
        "--data", "--splits", "--split", "--model", "--variant", "--layers", "--dropout", "--edge-sampling",
        "--normalization", "--lambda-cal", "--lr", "--hidden", "--tau", "--weight-decay", "--patience", "--epochs",
        "--seed", "--precision", "--out",
    ] {
        assert!(train.contains(flag), "train help lacks {flag}");
    }
    let csbm = ok(&["csbm", "--help"]);
    for flag in ["--p", "--q", "--n", "--mu", "--classes", "--dim", "--noise", "--trials", "--w-plus", "--w-minus", "--sweep-ratio", "--jobs"] {
        assert!(csbm.contains(flag), "csbm help lacks {flag}");
    }
}

#[test]
fn default_output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_csna"))
        .args(["splits", "--n", "20", "--k", "2"])
        .env("CSNA_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("splits/splits.json").exists());
}
