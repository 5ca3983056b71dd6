//! End-to-end runs of the binary: exit codes, files and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvi-geometry"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn toy_file(dir: &Path) -> PathBuf {
    let path = dir.join("toy.json");
    let out = bin(&["example", "toy3x2", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(csv: &Path) -> usize {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn example_writes_the_toy_tables() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(toy_file(dir.path())).unwrap();
    assert!(text.contains("[0.7, 0.2, 0.1]"));
    assert!(text.contains("\"gamma\": 0.95"));
    let out = bin(&["example", "unknown", s(&dir.path().join("x.json"))]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn validate_reports_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    assert_eq!(code(&bin(&["validate", s(&toy)])), 0);

    let text = fs::read_to_string(&toy).unwrap();
    let truncated = dir.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 3]).unwrap();
    let out = bin(&["validate", s(&truncated)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, text.replacen("[0.3, 0.3, 0.4]", "[0.3, 0.3, 0.5]", 1)).unwrap();
    let out = bin(&["validate", s(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("a=2") && stderr(&out).contains("s=3"),
        "{}",
        stderr(&out)
    );
    assert_eq!(code(&bin(&["validate", s(&bad), "--renormalize"])), 0);

    let out = bin(&["validate", s(&dir.path().join("missing.json"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not found"));
}

#[test]
fn analyze_toy_report() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    let report = dir.path().join("report.json");
    let out = bin(&["analyze", s(&toy), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["schema"], "qvi-geometry/analyze-report/v1");
    let num = |p: &str| v.pointer(p).and_then(|x| x.as_f64()).unwrap_or(f64::NAN);
    assert!((num("/optimality/delta_bar") - 0.4022).abs() < 1e-3);
    assert!((num("/tube/delta") - 0.1609).abs() < 1e-3);
    assert!((num("/spectral/lambda2") - 0.5618).abs() < 1e-3);
    assert!((num("/spectral/gamma_lambda2") - 0.5337).abs() < 1e-3);
    assert_eq!(v["certificates"]["optimal"]["strict"], "proven-strict");
    assert_eq!(v["horizons"]["k_basic"], 37);
    assert_eq!(v["config"]["depth"], 3);

    let stdout_run = bin(&["analyze", s(&toy), "--sequential"]);
    assert_eq!(code(&stdout_run), 0);
    let w: serde_json::Value = serde_json::from_slice(&stdout_run.stdout).unwrap();
    assert_eq!(w["optimality"], v["optimality"]);
    assert_eq!(w["certificates"], v["certificates"]);
}

#[test]
fn analyze_swap_is_not_strict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("swap.json");
    fs::write(
        &path,
        r#"{"name": "swap", "gamma": 0.9, "num_states": 2, "num_actions": 2,
            "transitions": [[[0.5, 0.5], [0.5, 0.5]], [[0.0, 1.0], [1.0, 0.0]]],
            "rewards": [[1.0, 0.0], [0.0, 1.0]]}"#,
    )
    .unwrap();
    let out = bin(&["analyze", s(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificates"]["full"]["strict"], "proven-not-strict");
    assert_eq!(v["obstruction"]["kind"], "periodic");
    assert_eq!(v["obstruction"]["policy"], serde_json::json!([2, 2]));
}

#[test]
fn analyze_over_cap_warns_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    let out = bin(&["analyze", s(&toy), "--cap", "100"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["certificates"]["full"]["depth_used"], 2);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn trajectory_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    let one = dir.path().join("one");
    let out = bin(&[
        "trajectory",
        s(&toy),
        "--paper-q0",
        "--iters",
        "50",
        "--csv",
        s(&one),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(data_rows(&one.join("qvi.csv")), 51);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(one.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["trajectories"][0]["poss_entrance"], 0);
    assert!(m["strip_half_width_v"].as_f64().is_some());
    assert!((m["gamma_lambda2"].as_f64().unwrap() - 0.5337).abs() < 1e-3);

    let many = dir.path().join("many");
    assert_eq!(
        code(&bin(&[
            "trajectory",
            s(&toy),
            "--circle",
            "2:12",
            "--csv",
            s(&many)
        ])),
        0
    );
    let csvs = fs::read_dir(&many)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(csvs, 12);

    let zero = dir.path().join("zero");
    assert_eq!(
        code(&bin(&[
            "trajectory",
            s(&toy),
            "--paper-q0",
            "--iters",
            "0",
            "--csv",
            s(&zero)
        ])),
        0
    );
    assert_eq!(data_rows(&zero.join("qvi.csv")), 1);

    let q0 = dir.path().join("q0.json");
    fs::write(&q0, "[[18, 17], [17, 17], [18, 17]]").unwrap();
    assert_eq!(
        code(&bin(&[
            "trajectory",
            s(&toy),
            "--q0",
            s(&q0),
            "--iters",
            "5",
            "--csv",
            s(&zero)
        ])),
        0
    );

    assert_eq!(code(&bin(&["trajectory", s(&toy), "--csv", s(&zero)])), 1);
    assert_eq!(
        code(&bin(&[
            "trajectory",
            s(&toy),
            "--paper-q0",
            "--delta-frac",
            "0.7",
            "--csv",
            s(&zero)
        ])),
        1
    );
}

#[test]
fn reference_start_requires_the_toy() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(toy_file(dir.path()))
        .unwrap()
        .replace("toy3x2", "other");
    let other = dir.path().join("other.json");
    fs::write(&other, text).unwrap();
    let out = bin(&[
        "trajectory",
        s(&other),
        "--paper-q0",
        "--csv",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn qlearn_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = bin(&[
            "qlearn",
            s(&toy),
            "--seed",
            "11",
            "--steps",
            "20000",
            "--csv",
            s(d),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for j in 0..12 {
        let name = format!("qlearn_{j:02}.csv");
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap()
        );
    }
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["qlearn"]["alpha0"], 0.35);
    assert_eq!(m["qlearn"]["decay"], 0.01);
    assert_eq!(m["circle"]["count"], 12);

    let zero = dir.path().join("zero");
    assert_eq!(
        code(&bin(&[
            "qlearn",
            s(&toy),
            "--steps",
            "0",
            "--paper-q0",
            "--csv",
            s(&zero)
        ])),
        0
    );
    assert_eq!(data_rows(&zero.join("qlearn.csv")), 1);

    assert_eq!(
        code(&bin(&[
            "qlearn",
            s(&toy),
            "--alpha0",
            "1.5",
            "--csv",
            s(&zero)
        ])),
        1
    );
    assert_eq!(
        code(&bin(&[
            "qlearn",
            s(&toy),
            "--initial-state",
            "0",
            "--csv",
            s(&zero)
        ])),
        1
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&bin(&["no-such-command"])), 1);
    assert_eq!(code(&bin(&["trajectory"])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
}

#[test]
fn numeric_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_file(dir.path());
    let out = bin(&["analyze", s(&toy), "--tol", "1e-300", "--max-iter", "20"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("max_iter"));
}
