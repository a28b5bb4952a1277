use std::path::Path;
use std::process::{Command, Output};

use vclda::*;

fn vclda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vclda")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vclda(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn simulate(dir: &Path) -> (String, String) {
    let (train, test) = (path(dir, "train.csv"), path(dir, "test.csv"));
    ok(&[
        "simulate", "--direction", "2", "--covariance", "1", "--n-per-class", "60", "--p", "3", "--s", "3",
        "--test-size", "300", "--seed", "11", "--out", &train, "--test-out", &test,
    ]);
    (train, test)
}

#[test]
fn simulate_fit_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = simulate(dir.path());
    let model = path(dir.path(), "model.json");
    let fit_out = ok(&["fit", "--data", &train, "--ln", "5", "--out", &model]);
    assert!(fit_out.contains("selected ln = 5"), "{fit_out}");

    let labels = path(dir.path(), "labels.csv");
    let stdout = ok(&["predict", "--model", &model, "--data", &test, "--out", &labels]);
    let risk: f64 = stdout.trim().strip_prefix("risk = ").unwrap().parse().unwrap();

    // same numbers through the library
    let train_data = Dataset::load_csv(Path::new(&train)).unwrap();
    let test_data = Dataset::load_csv(Path::new(&test)).unwrap();
    let config = FitConfig {
        num_basis: 5,
        ..FitConfig::default()
    };
    let (lib_model, _) =
        ClassifierModel::fit(train_data.x.view(), train_data.u.view(), &train_data.y, &config).unwrap();
    let lib_risk = lib_model
        .empirical_risk(test_data.x.view(), test_data.u.view(), &test_data.y)
        .unwrap();
    assert_eq!(format!("{risk:.3}"), format!("{lib_risk:.3}"));
    assert_eq!(ClassifierModel::load(Path::new(&model)).unwrap(), lib_model);

    let written = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(written.lines().next(), Some("label"));
    assert_eq!(written.lines().count(), 301);
}

#[test]
fn cv_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = simulate(dir.path());
    let table = ok(&["cv", "--data", &train, "--ln-grid", "4,6", "--folds", "3"]);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("ln,lambda,fold,risk"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn cv_fit_in_high_regime() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = simulate(dir.path());
    let model = path(dir.path(), "model.json");
    let out = ok(&[
        "fit", "--data", &train, "--regime", "high", "--ln-grid", "4,5", "--folds", "3", "--out", &model,
    ]);
    assert!(out.contains("selected ln = 4") || out.contains("selected ln = 5"), "{out}");
    assert!(ClassifierModel::load(Path::new(&model)).is_ok());
}

#[test]
fn benchmark_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = path(dir.path(), "exp.toml");
    let results = path(dir.path(), "results.json");
    std::fs::write(
        &config,
        format!(
            "trials = 3\nmethods = [\"vclda\", \"oracle\"]\noutput_path = \"{results}\"\n\n\
             [scenario]\ndirection = 1\ncovariance = 1\nn_per_class = 40\np = 3\ns = 3\ntest_size = 100\nseed = 5\n\n\
             [fixed]\nln = 4\nlambda = 0.0\n"
        ),
    )
    .unwrap();
    let stdout = ok(&["benchmark", "--config", &config, "--threads", "1"]);
    assert!(stdout.contains("oracle"), "{stdout}");
    let parsed = BenchmarkResults::from_json(&std::fs::read_to_string(&results).unwrap()).unwrap();
    assert_eq!(parsed.trials.len(), 3);
    assert_eq!(parsed.summary.len(), 2);
    assert!(parsed.wall_clock_seconds.is_none());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vclda(&["--help"]).status.code(), Some(0));
    assert_eq!(vclda(&["fit", "--bogus"]).status.code(), Some(1));
    let missing = path(dir.path(), "missing.csv");
    let model = path(dir.path(), "model.json");
    assert_eq!(vclda(&["fit", "--data", &missing, "--out", &model]).status.code(), Some(1));

    let config = path(dir.path(), "bad.toml");
    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    assert_eq!(vclda(&["benchmark", "--config", &config]).status.code(), Some(1));

    // more basis functions than samples in a class
    let (train, _) = simulate(dir.path());
    let out = vclda(&["fit", "--data", &train, "--ln", "80", "--out", &model]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
