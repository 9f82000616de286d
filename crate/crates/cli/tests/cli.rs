use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn segbump(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segbump"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, mode: &str) -> Value {
    let text = std::fs::read_to_string(out.join(mode).join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn optimize_finds_an_interior_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let o = segbump(dir.path(), &["optimize", "--ell", "2", "--epsilon", "1e-8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &report(dir.path(), "optimize")["results"];
    assert_eq!(r["interior"], Value::Bool(true));
    let (rad, rho) = (r["r"].as_f64().unwrap(), r["rho"].as_f64().unwrap());
    assert!((rad - rho).abs() < 1e-8);
    let window = &r["window"];
    assert!(rad > window["lo"].as_f64().unwrap() && rad < window["hi"].as_f64().unwrap());
}

#[test]
fn landscape_writes_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = segbump(
        dir.path(),
        &[
            "landscape",
            "--ell",
            "3",
            "--epsilon",
            "1e-6",
            "--samples",
            "200",
        ],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("landscape/landscape.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,rho,G"));
    assert_eq!(lines.count(), 40_000);
}

#[test]
fn corrections_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# two epsilons, three components\nepsilon = 0.05, 0.025\nsystem = three\n",
    )
    .unwrap();
    let o = segbump(
        dir.path(),
        &["corrections", "--config", cfg.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = report(dir.path(), "corrections")["results"]["rows"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row["v_omega_gap"].as_f64().unwrap() <= 1e-9);
        let sub = dir
            .path()
            .join("corrections")
            .join(row["directory"].as_str().unwrap());
        assert!(sub.join("manifest.json").is_file());
    }
}

#[test]
fn verify_scaling_reports_fourth_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = segbump(
        dir.path(),
        &["verify-scaling", "--epsilon", "0.1,0.05,0.025"],
    );
    assert!(o.status.success());
    let rows = report(dir.path(), "verify-scaling")["results"]["rows"]
        .as_array()
        .unwrap()
        .clone();
    for row in &rows[1..] {
        let ratio = row["ratio"].as_f64().unwrap();
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }
}

#[test]
fn ground_state_profile_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = segbump(dir.path(), &["ground-state", "--set", "n_points=4001"]);
    assert!(o.status.success());
    let profile =
        segbump_core::io::read_profile(&dir.path().join("ground-state/ground_state.csv")).unwrap();
    let peak = report(dir.path(), "ground-state")["results"]["peak_value"]
        .as_f64()
        .unwrap();
    assert_eq!(profile.values()[0], peak);
    assert_eq!(profile.values().len(), 4001);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = segbump(dir.path(), &["optimize", "--epsilon", "1e-8"]);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = segbump(dir.path(), &["optimize", "--set", "colour=red"]);
    assert_eq!(unknown.status.code(), Some(2));
    let increasing = segbump(dir.path(), &["verify-scaling", "--epsilon", "0.025,0.05"]);
    assert_eq!(increasing.status.code(), Some(2));

    let solver = segbump(dir.path(), &["optimize", "--ell", "2", "--epsilon", "0.5"]);
    assert_eq!(solver.status.code(), Some(1));
    let err: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("optimize/error.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(err["mode"], "optimize");
    assert!(!err["error"].as_str().unwrap().is_empty());
}
