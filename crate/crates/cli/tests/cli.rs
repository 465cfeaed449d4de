use std::process::{Command, Output};

fn apstream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apstream"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    let json = dir.path().join("summary.json");
    let out = apstream(&[
        "run",
        "--clients",
        "3",
        "--reps",
        "2",
        "--scheme",
        "cph",
        "--scheme",
        "CLIENT",
        "--out-csv",
        csv.to_str().unwrap(),
        "--out-json",
        json.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("param,value,scheme,rep,seed,mean_bitrate_kbps"));
    assert!(std::fs::read_to_string(&json).unwrap().contains("CLIENT"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("CPH") && stdout.contains("CLIENT"));
}

#[test]
fn sweep_labels_rows_by_value() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = apstream(&[
        "sweep",
        "--param",
        "gamma",
        "--values",
        "0,2",
        "--clients",
        "2",
        "--reps",
        "1",
        "--scheme",
        "BUFF",
        "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("gamma,0,BUFF") && text.contains("gamma,2,BUFF"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_clients = 0\nb_min_s = 20\n").unwrap();
    assert_eq!(
        apstream(&["run", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(
        apstream(&["run", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let out = apstream(&["sweep", "--param", "colour", "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        apstream(&["run", "--scheme", "FASTEST"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = apstream(&["run", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_check_reports_no_mismatches() {
    let out = apstream(&["oracle-check", "--instances", "200", "--seed", "9"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("200 instances, 0 mismatches"));
}
