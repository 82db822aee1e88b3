use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iscore"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden_args(out: &Path) -> Vec<String> {
    [
        "score",
        "--masked",
        s(&fixture("masked.csv")),
        "--imputed",
        s(&fixture("imputed.csv")),
        "--refit",
        "fcs_regression_predict",
        "-N",
        "1",
        "--min-rows",
        "3",
        "--out",
        s(out),
    ]
    .iter()
    .map(|a| a.to_string())
    .collect()
}

/// Least-squares line through (x, y), evaluated at `at`.
fn ols_predict(x: &[f64], y: &[f64], at: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    my + sxy / sxx * (at - mx)
}

fn neg_mae(train_x: &[f64], train_y: &[f64], test_x: &[f64], test_y: &[f64]) -> f64 {
    let total: f64 = test_x.iter().zip(test_y).map(|(&x, &y)| (ols_predict(train_x, train_y, x) - y).abs()).sum();
    -total / test_x.len() as f64
}

#[test]
fn golden_score_report_is_reproduced_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("score.json");
    let o = bin().args(golden_args(&out)).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture("golden_score.json")).unwrap());
}

#[test]
fn golden_values_match_closed_form_regression() {
    let golden: serde_json::Value = serde_json::from_slice(&fs::read(fixture("golden_score.json")).unwrap()).unwrap();
    let x3 = [0.2, 1.1, -0.7, 0.9, 0.4, -1.3, 2.0, 1.6, -0.9, 0.1, 1.2, -0.5];
    let x1_imputed = [0.4, 1.3, -0.9, 0.6];
    let x1_observed = [1.2, -0.8, 0.5, 2.1, -1.5, 0.7, 1.9, -0.2];
    let x2_imputed = [0.1, -1.7, 2.4];
    let x2_observed = [1.5, -0.4, 2.2, 0.3, 1.0, -2.0, 0.6, -0.3, 0.8];
    let x2_test_x3: Vec<f64> = [0, 1, 2, 3, 7, 8, 9, 10, 11].iter().map(|&i| x3[i]).collect();

    let s1 = neg_mae(&x3[..4], &x1_imputed, &x3[4..], &x1_observed);
    let s2 = neg_mae(&x3[4..7], &x2_imputed, &x2_test_x3, &x2_observed);
    let (w1, w2) = (4.0 * 8.0 / 144.0, 3.0 * 9.0 / 144.0);
    let agg = (w1 * s1 + w2 * s2) / 2.0;

    let vars = golden["variables"].as_array().unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    assert!(close(vars[0]["score"].as_f64().unwrap(), s1));
    assert!(close(vars[1]["score"].as_f64().unwrap(), s2));
    assert!(close(vars[0]["weight"].as_f64().unwrap(), w1));
    assert!(close(vars[1]["weight"].as_f64().unwrap(), w2));
    assert!(close(golden["aggregate"].as_f64().unwrap(), agg));
}

#[test]
fn precomputed_draws_match_refit_for_deterministic_method() {
    let dir = tempfile::tempdir().unwrap();
    let tables = dir.path().join("tables");
    let draws = dir.path().join("draws");
    let o = run(&[
        "score",
        "--masked",
        s(&fixture("masked.csv")),
        "--imputed",
        s(&fixture("imputed.csv")),
        "--export-tables",
        s(&tables),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for col in ["X1", "X2"] {
        let o = run(&[
            "impute",
            "--masked",
            s(&tables.join(col).join("table.csv")),
            "--method",
            "fcs_regression_predict",
            "-k",
            "2",
            "--out",
            s(&draws.join(col)),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let from_draws = dir.path().join("draws.json");
    let o = run(&[
        "score",
        "--masked",
        s(&fixture("masked.csv")),
        "--imputed",
        s(&fixture("imputed.csv")),
        "--draws",
        s(&draws),
        "-N",
        "1",
        "--min-rows",
        "3",
        "--out",
        s(&from_draws),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&from_draws).unwrap(), fs::read(fixture("golden_score.json")).unwrap());
}

#[test]
fn complete_input_exits_with_nothing_scorable() {
    let o = run(&[
        "score",
        "--masked",
        s(&fixture("imputed.csv")),
        "--imputed",
        s(&fixture("imputed.csv")),
        "--refit",
        "marginal_sample",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn observed_mismatch_exits_2_and_lists_cells() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    let text = fs::read_to_string(fixture("imputed.csv")).unwrap().replace("2.1,1.0,1.6", "2.2,1.0,1.6");
    fs::write(&bad, text).unwrap();
    let o = run(&["score", "--masked", s(&fixture("masked.csv")), "--imputed", s(&bad), "--refit", "marginal_sample"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 8 column 1"));
}

#[test]
fn star_requires_refit() {
    let o = run(&[
        "score",
        "--masked",
        s(&fixture("masked.csv")),
        "--imputed",
        s(&fixture("imputed.csv")),
        "--draws",
        "nowhere",
        "--star",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_regenerates_identical_data() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&["simulate", "nonlinear-mixture", "--n-per-pattern", "30", "--seed", "11", "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["simulate", "--spec", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["complete.csv", "masked.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_amputation_keeps_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = run(&["simulate", "mcar", "--from", s(&fixture("imputed.csv")), "--prop", "0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("masked.csv")).unwrap(), fs::read(out.join("complete.csv")).unwrap());
}

#[test]
fn benchmark_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "methods = [\"marginal_sample\", \"knn:k=3\"]\nrepetitions = 2\nseed = 5\nn_draws = 4\n\n\
         [generator]\nkind = \"gauss_mixture\"\nn_per_pattern = 30\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["benchmark", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "report.csv", "scores.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timing.json").exists());

    let sweep = dir.path().join("sweep");
    let o = run(&["sweep-n", "--config", s(&cfg), "--n-list", "2,4", "--reference", "4", "--out", s(&sweep)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(sweep.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "methods = [\"marginal_sample\"]\nbogus = 1\n[generator]\nkind = \"uniform\"\n").unwrap();
    let o = run(&["benchmark", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}
