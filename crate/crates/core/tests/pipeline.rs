//! File-level round trips: example MDP → analysis → trajectory CSVs.

use std::fs;

use qvi_geometry::io::{self, RunKind, RunManifest, CSV_HEADER, MANIFEST_FILE};
use qvi_geometry::report::{analyze, AnalyzeConfig, AnalyzeReport};
use qvi_geometry::trajectory::{
    run_qlearning_batch, run_qvi_batch, QLearnConfig, SolveOptions, SolvedMdp,
};
use qvi_geometry::{toy, Execution};

#[test]
fn example_file_analysis_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("toy.json");
    io::save_mdp(&io::builtin_example("toy3x2").unwrap(), &mdp_path).unwrap();
    assert!(io::builtin_example("nope").is_none());

    let mdp = io::load_mdp(&mdp_path, false).unwrap();
    let problem = SolvedMdp::new(mdp, SolveOptions::default()).unwrap();
    let report = analyze(
        &problem,
        &toy::reference_q0(),
        &AnalyzeConfig::default(),
        Execution::default(),
    )
    .unwrap();
    let text = serde_json::to_string_pretty(&report).unwrap();
    let back: AnalyzeReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.horizons.k_basic, Some(37));
    assert!(report.horizons.k_id.unwrap() <= 37);

    let init = problem
        .basis
        .circle_initials(problem.q_star(), 2.0, 12)
        .unwrap();
    let runs = run_qvi_batch(&problem, &init, 50, Execution::default()).unwrap();
    let records: Vec<_> = runs.iter().map(|r| r.records.clone()).collect();
    let out = dir.path().join("qvi");
    let manifest = io::write_run(
        &out,
        "traj",
        RunManifest::new(&problem, RunKind::Qvi),
        &records,
    )
    .unwrap();
    assert_eq!(manifest.trajectories.len(), 12);
    for entry in &manifest.trajectories {
        let text = fs::read_to_string(out.join(&entry.csv)).unwrap();
        assert_eq!(text.lines().nth(1), Some(CSV_HEADER));
        let parsed = io::parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), 51);
        assert_eq!(parsed, records[entry.id]);
        assert!((entry.initial.u.powi(2) + entry.initial.v.powi(2) - 4.0).abs() < 1e-9);
    }
    assert!(out.join(MANIFEST_FILE).exists());

    let cfg = QLearnConfig {
        steps: 3_000,
        ..Default::default()
    };
    let q = run_qlearning_batch(&problem, &init[..2], &cfg, Execution::Sequential).unwrap();
    let qdir = dir.path().join("ql");
    let m = io::write_run(
        &qdir,
        "qlearn",
        RunManifest::new(&problem, RunKind::Qlearn),
        &q,
    )
    .unwrap();
    let rows =
        io::parse_csv(&fs::read_to_string(qdir.join(&m.trajectories[1].csv)).unwrap()).unwrap();
    assert_eq!(rows.len(), 31);
    assert!(rows.iter().all(|r| r.witness_residual.is_none()));
}
