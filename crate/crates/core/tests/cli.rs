use std::path::Path;
use std::process::{Command, Output};

fn netprice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netprice"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_symmetric_pair() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "pair.net", "2 2 2 2 2 0.5\n0 1\n1 0\n");
    let out = netprice(&["solve", &file]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("differentiated prices: 1.25 1.25"), "{text}");
    assert!(text.contains("uniform prices: 1.25 1.25"), "{text}");
    assert!(text.contains("profit ratio: 1"), "{text}");
}

#[test]
fn solve_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "pair.net", "2 2 2 2 2 0.5\n0 1\n1 0\n");
    let out = netprice(&["--format", "json", "solve", &file]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scenarios"][0]["scenario"], "differentiated");
    assert_eq!(v["scenarios"][0]["prices"][1], 1.25);
}

#[test]
fn sweep_writes_one_table_per_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "figs.toml",
        "[topology]\nn = 30\nreplicates = 2\npa_exponents = [2.5, 3.0]\n",
    );
    let out_dir = dir.path().join("out");
    let out = netprice(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--plots", "sweep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in ["profit_ratio_pa_exponent_2_5", "profit_ratio_pa_exponent_3"] {
        let text = std::fs::read_to_string(out_dir.join(format!("{stem}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 12, "header plus 11 rows");
        assert!(text.starts_with("topology,shape,mu,"));
        assert!(out_dir.join(format!("{stem}.svg")).exists());
    }
    let reps = std::fs::read_to_string(out_dir.join("profit_ratio_pa_replicates.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 2 * 2 * 11);
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[duopoly]\nmax_round = 4\n");
    let out = netprice(&["--config", &cfg, "duopoly"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("max_round"), "{err}");
}

#[test]
fn invalid_config_value_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[topology]\nreplicates = 0\n");
    let out = netprice(&["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("topology.replicates"));
}

#[test]
fn missing_network_file_fails() {
    let out = netprice(&["solve", "/nonexistent/network.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}

#[test]
fn binary_report_includes_oracle_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("b");
    let out = netprice(&[
        "--out",
        out_dir.to_str().unwrap(),
        "binary",
        "--n",
        "12",
        "--instances",
        "3",
        "--trials",
        "100",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(out_dir.join("binary_study.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "achieved_over_optimal").unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let ratio: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(ratio > 0.5 && ratio <= 1.0 + 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn run_requires_experiment_key() {
    let out = netprice(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("experiment"));
}

#[test]
fn run_dispatches_on_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fair.toml",
        "experiment = \"total_cost_fairness\"\nformat = \"json\"\n[fairness]\nn = 20\n",
    );
    let out_dir = dir.path().join("f");
    let out = netprice(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fairness_summary.json")).unwrap())
            .unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
}
