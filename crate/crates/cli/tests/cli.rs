use std::path::Path;
use std::process::{Command, Output};

fn mom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mom"))
        .args(args)
        .env_remove("MOM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn plan_singleton() {
    let o = mom(&["plan", "--class", "singleton", "--epsilon", "1", "--delta", "0.05", "--p", "2", "--vp", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["plan"]["m"], 102_400);
    assert_eq!(v["plan"]["kappa"], 7002);
}

#[test]
fn plan_kmeans_reports_log_size_only() {
    let o = mom(&[
        "plan", "--class", "kmeans", "--k", "2", "--d", "2", "--epsilon", "0.5", "--delta", "0.05", "--p", "2", "--vp",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert!(v["plan"]["log_N"].as_f64().unwrap() > 1000.0);
    assert!(v["plan"].get("N").is_none());
    assert_eq!(v["request"]["class"]["class"], "kmeans");
}

#[test]
fn plan_rejects_p_one() {
    let o = mom(&["plan", "--class", "singleton", "--epsilon", "1", "--delta", "0.05", "--p", "1", "--vp", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p must exceed 1"), "{}", stderr(&o));
}

#[test]
fn plan_missing_value_and_bad_flag_exit_two() {
    assert_eq!(mom(&["plan", "--class", "singleton"]).status.code(), Some(2));
    assert_eq!(mom(&["plan", "--bogus"]).status.code(), Some(2));
    assert_eq!(mom(&[]).status.code(), Some(2));
}

#[test]
fn estimate_matches_hand_mom() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.csv", "x\n1\n2\n3\n4\n5\n100\n");
    let o = mom(&["estimate", "--input", &f, "--kappa", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    // blocks {1,2}, {3,4}, {5,100}: means 1.5, 3.5, 52.5
    assert_eq!(v["estimate"], 3.5);
    assert_eq!(v["block_means"], serde_json::json!([1.5, 3.5, 52.5]));
    assert_eq!(v["discarded"], 0);

    let o = mom(&["estimate", "--input", &f, "--kappa", "1"]);
    assert_eq!(json(&o)["estimate"], 115.0 / 6.0);

    let o = mom(&["estimate", "--input", &f, "--kappa", "4"]);
    assert_eq!(json(&o)["discarded"], 2);
}

#[test]
fn estimate_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "1\n2\n3\nfour\n5\n");
    let o = mom(&["estimate", "--input", &bad, "--kappa", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 4"), "{}", stderr(&o));

    let few = write(dir.path(), "few.csv", "1\n2\n");
    let o = mom(&["estimate", "--input", &few, "--kappa", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient points"));
}

#[test]
fn estimate_regression_pairs() {
    let dir = tempfile::tempdir().unwrap();
    // residual <w,x> - y with w = (1, -1): rows give 0, 1, -2, 3
    let f = write(dir.path(), "xy.csv", "1,1,0\n2,0,1\n0,1,1\n3,0,0\n");
    let o = mom(&["estimate", "--input", &f, "--kappa", "1", "--xy", "--w", "1,-1", "--loss", "absolute"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["estimate"], 1.5);
    let o = mom(&["estimate", "--input", &f, "--kappa", "1", "--xy", "--w", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_permutation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mom(&["verify", "--suite", "permutation", "--kappa", "200", "--draws", "1000000", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("PASS permutation"), "{line}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("permutation.json")).unwrap()).unwrap();
    for r in report["report"]["data"].as_array().unwrap() {
        assert!(r["empirical_prob"].as_f64().unwrap() <= 0.0183);
    }
}

#[test]
fn verify_all_quick() {
    let dir = tempfile::tempdir().unwrap();
    let o = mom(&["verify", "--suite", "all", "--quick", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 6, "{out}");
    assert!(out.contains("quick — not evidential"));
}

#[test]
fn verify_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = mom(&[
        "verify", "--suite", "coverage", "--epsilon", "0.01", "--delta", "0.01", "--m", "1", "--trials", "200", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL coverage"));
    assert!(stderr(&o).contains("coverage"));
    // simulate reports the same failure without gating
    let o = mom(&[
        "simulate", "--suite", "coverage", "--epsilon", "0.01", "--delta", "0.01", "--m", "1", "--trials", "200",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn simulate_mom_vs_mean_emits_quantile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = mom(&[
        "simulate", "--suite", "mom_vs_mean", "--alpha", "1.8", "--quick", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("mom_vs_mean_quantiles.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "quantile,mom,mean");
    assert_eq!(lines.len(), 4);
}

#[test]
fn seeded_reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = mom(&[
            "simulate", "--suite", "single_mean", "--quick", "--seed", "42", "--no-timestamp", "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("single_mean.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.contains("\"timestamp\": null"));
}

#[test]
fn csv_format_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mom"))
        .args(["simulate", "--suite", "kmeans_interval", "--quick", "--format", "csv"])
        .env("MOM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("kmeans_interval.csv")).unwrap();
    assert!(csv.starts_with("key,value\n"));
    assert!(csv.contains("report.data.containment_frequency,"));
}

#[test]
fn config_file_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.toml",
        "[plan]\nclass = \"singleton\"\nepsilon = 1.0\ndelta = 0.05\np = 2.0\nvp = 1.0\n",
    );
    let o = mom(&["plan", "--config", &good]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&o)["plan"]["m"], 102_400);
    // flags override the file
    let o = mom(&["plan", "--config", &good, "--vp", "2"]);
    assert_eq!(json(&o)["plan"]["m"], 204_800);

    let bad = write(dir.path(), "bad.toml", "[plan]\nepsilon = 1.0\ntypo = 3\n");
    let o = mom(&["plan", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("typo"), "{}", stderr(&o));
}

#[test]
fn net_command() {
    let o = mom(&["net", "--beta", "0.5", "--d", "2", "--seed", "1", "--audit", "1000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["construction"], "greedy_packing");
    assert!(v["points"].as_array().unwrap().len() <= 144);
    let o = mom(&["net", "--beta", "0.5", "--d", "1", "--lattice", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 3);
    assert_eq!(mom(&["net", "--beta", "2", "--d", "2"]).status.code(), Some(2));
}
