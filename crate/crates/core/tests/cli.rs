use std::process::{Command, Output};

fn sqe(args: &[&str], dir: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqe"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    String::from_utf8_lossy(&out.stderr).lines().next().unwrap_or("").to_string()
}

#[test]
fn missing_file_reports_io_kind() {
    let d = tempfile::tempdir().unwrap();
    let out = sqe(&["eval", "--tracks", "none.txt", "--gt", "none.txt", "--report", "r.csv"], d.path());
    assert!(error_line(&out).starts_with("error: kind=io message="));
    assert!(!d.path().join("r.csv").exists());
}

#[test]
fn bad_arguments_report_usage_kind() {
    let d = tempfile::tempdir().unwrap();
    let out = sqe(&["sweep", "--param", "speed"], d.path());
    assert!(error_line(&out).starts_with("error: kind=usage message="));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_carry_line_numbers() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[sqe]\ndelta_L = 15\nbogus = 1\n").unwrap();
    std::fs::write(d.path().join("t.txt"), "").unwrap();
    let out = sqe(
        &["--config", "c.toml", "sqe", "--tracks", "t.txt", "--features", "t.txt", "--report", "r.txt"],
        d.path(),
    );
    let line = error_line(&out);
    assert!(line.starts_with("error: kind=parse message="), "{line}");
    assert!(line.contains("c.toml:3"), "{line}");
}

#[test]
fn invalid_thresholds_are_validation_errors() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("det.txt"), "1,-1,0,0,10,10,0.9,-1,-1,-1\n").unwrap();
    std::fs::write(d.path().join("f.txt"), "1,-1,0.1,0.2\n").unwrap();
    let out = sqe(
        &["track", "--detections", "det.txt", "--features", "f.txt", "--reid", "-1", "--merge", "0.5", "--out", "o.txt"],
        d.path(),
    );
    assert!(error_line(&out).starts_with("error: kind=validation"));
}

#[test]
fn empty_track_file_scores_zero() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("t.txt"), "").unwrap();
    let out = sqe(&["sqe", "--tracks", "t.txt", "--features", "t.txt", "--report", "r.txt"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(d.path().join("r.txt")).unwrap();
    assert!(report.contains("n = 0") && report.contains("sqe = 0"));
}
