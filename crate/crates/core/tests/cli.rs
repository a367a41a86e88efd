use std::path::Path;
use std::process::Command;

fn critp(config: &str, dir: &Path, extra: &[&str]) -> std::process::Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_critp"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .env("CRITP_OUTPUT_ROOT", dir.join("root"))
        .output()
        .unwrap()
}

#[test]
fn check_hypotheses_passes_for_four_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = critp(r#"{"mode": "check-hypotheses", "N": 4, "j": 1, "p": 2}"#, dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("root/check-hypotheses/hypotheses.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    for key in ["s1", "s2", "s3"] {
        assert_eq!(v[0][key]["passed"], true, "{key}");
    }
}

#[test]
fn validate_bubble_residuals_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let out = critp(
        r#"{"mode": "validate-bubble", "N": 4, "p": 2, "bubble": {"spacings": [0.25, 0.125]}}"#,
        dir.path(),
        &["--output-dir", dir.path().join("vb").to_str().unwrap()],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("vb/bubble_residuals.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("h,sup_residual,l1_residual,J,C_u"));
    let sup: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sup.len(), 2);
    assert!(sup[1] < sup[0]);
}

#[test]
fn invalid_config_exits_nonzero_with_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let out = critp("{\"mode\": \"solve\",\n\"N\": 4,\n\"p\": 5}", dir.path(), &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 < p < N") && err.contains("line 3"), "{err}");

    let out = critp(r#"{"mode": "solve", "N": 4, "p": 2, "bogus": 1}"#, dir.path(), &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn solve_writes_all_artifacts_and_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"mode": "check-hypotheses", "N": 4, "p": 2.5, "j": 1,
        "grid": {"nodes_per_axis": 9, "half_extent": 1.0},
        "solver": {"max_iters": 5}}"#;
    let out = critp(config, dir.path(), &["--mode", "solve", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("root/solve");
    for f in ["manifest.json", "trace.csv", "field.pbf", "result.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["mode"], "solve");
    let replay = critp::cli::parse_config(&manifest["config"].to_string()).unwrap();
    assert_eq!(replay.seed, 3);
    let trace = std::fs::read_to_string(run.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,J,grad_norm_p,crit_norm,nehari_defect,dual_residual\n"));
    let field = critp::io::read_field(&run.join("field.pbf")).unwrap();
    assert_eq!(field.grid().spec().nodes_per_axis, 9);
}
