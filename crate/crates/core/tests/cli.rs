use std::path::Path;
use std::process::{Command, Output};

use netcert::sweep::{read_csv, Verdict, CSV_HEADER};

const MODEL: &str = r#"{
    "name": "three",
    "graph": {"vertices": 3, "edges": [[1, 2], [2, 3]]},
    "agents": [
        {"num": [1], "den": [1, 2]},
        {"num": [0.5], "den": [1, 3]},
        {"num": [-1], "den": [1, 1, 2]}
    ],
    "partitions": [
        {"name": "whole", "elements": [["1:2"]]},
        {"name": "links", "elements": [[1], [2]]}
    ],
    "grid": {"theta1": {"from": -40, "to": 20, "steps": 4}, "theta2": {"from": -20, "to": 40, "steps": 4}},
    "modes": ["free", "fixed"]
}"#;

fn netcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_model(dir: &Path, text: &str) -> String {
    let path = dir.join("model.json");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn check_reports_sizes_and_inadmissible_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), MODEL);
    let out = netcert(&["check", &model]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["nominal_stable"], true);
    let parts = json["partitions"].as_array().unwrap();
    assert_eq!(parts[0]["admissible"], true);
    assert_eq!(parts[1]["admissible"], false);
}

#[test]
fn certify_zero_sector_and_excluded_sector() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), MODEL);
    let dump = dir.path().join("sdp.txt");
    let out = netcert(&[
        "certify", &model, "--partition", "whole", "--theta1", "0", "--theta2", "0", "--dump",
        dump.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["feasible"], true);
    assert!(json["margin"].as_f64().unwrap() >= 1e-7);
    assert!(std::fs::metadata(&dump).unwrap().len() > 0);

    let out = netcert(&["certify", &model, "--partition", "whole", "--theta1", "10", "--theta2", "30"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("not-evaluated"));

    let out = netcert(&["certify", &model, "--partition", "links", "--theta1", "0", "--theta2", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_network_is_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    // two unit lags joined by one edge: closed-loop poles at 0 and -2
    let text = r#"{
        "graph": {"vertices": 2, "edges": [[1, 2]]},
        "agents": [{"num": [1], "den": [1, 1]}, {"num": [1], "den": [1, 1]}],
        "partitions": [{"name": "whole", "elements": [[1]]}]
    }"#;
    let model = write_model(dir.path(), text);
    let out = netcert(&["certify", &model, "--partition", "whole", "--theta1", "0", "--theta2", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_is_byte_identical_without_timing() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), MODEL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "2")] {
        let run = netcert(&["sweep", &model, "--out", out.to_str().unwrap(), "--no-timing", "--jobs", jobs]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    for file in ["sweep.csv", "summary.json", "regions.dat"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let csv = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    let points = read_csv(&a.join("sweep.csv")).unwrap();
    // one admissible partition, two modes, 4x4 grid
    assert_eq!(points.len(), 32);
    let excluded = points
        .iter()
        .filter(|p| p.theta1 > 0.0 || p.theta2 < 0.0)
        .all(|p| p.verdict == Verdict::NotEvaluated);
    assert!(excluded);
    assert!(points.iter().any(|p| p.verdict == Verdict::Feasible));
}

#[test]
fn validate_passes_on_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), MODEL);
    let sweep = dir.path().join("s");
    assert!(netcert(&["sweep", &model, "--out", sweep.to_str().unwrap()]).status.success());
    let report = dir.path().join("report.json");
    let out = netcert(&[
        "validate", &model, "--sweep", sweep.to_str().unwrap(), "--samples", "50", "--trials", "10",
        "--out", report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["falsification"]["soundness_violations"], 0);
}

#[test]
fn malformed_model_points_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), &MODEL.replace("\"steps\": 4}, \"theta2\"", "\"steps\": 0}, \"theta2\""));
    let out = netcert(&["check", &model]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.theta1"));
}
