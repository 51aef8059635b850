use std::process::{Command, Output};

use treerecon_cli::GOLDEN_SUITE;

fn treerecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treerecon")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn channel_summary() {
    let out = treerecon(&["channel", "--q", "2", "--lambda1", "0.5", "--lambda2", "0.3", "--d", "5"]);
    assert!(out.status.success());
    let line = text(&out.stdout);
    assert_eq!(line.lines().count(), 1);
    for field in ["record=channel", "q=2", "p0=0.575", "p1=0.075", "p2=0.175", "ks_solvable=true", "d=5"] {
        assert!(line.split_whitespace().any(|f| f == field), "{field} missing from {line}");
    }
    assert!(line.contains("version="));
}

#[test]
fn infeasible_channel_exits_with_validation_code() {
    let out = treerecon(&["channel", "--q", "2", "--lambda1", "0.9", "--lambda2", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.starts_with("error kind=domain message="));
    assert!(err.contains("p1"));
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn argument_errors_exit_with_validation_code() {
    let both = treerecon(&[
        "channel",
        "--q",
        "2",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.3",
        "--p0",
        "1",
        "--p1",
        "0",
        "--p2",
        "0",
    ]);
    assert_eq!(both.status.code(), Some(2));
    assert!(text(&both.stderr).starts_with("error kind=validation"));
    assert_eq!(treerecon(&["channel", "--q", "2", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        treerecon(&["exact", "--q", "2", "--lambda1", "0.5", "--lambda2", "0.3", "--d", "0", "--n", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn capacity_and_bracket_exit_codes() {
    let out = treerecon(&["exact", "--q", "4", "--lambda1", "0.5", "--lambda2", "0.3", "--d", "2", "--n", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("16777216"));
    let out = treerecon(&[
        "threshold",
        "--method",
        "dynsys",
        "--q",
        "2",
        "--d",
        "2",
        "--lambda2",
        "0.1",
        "--lo",
        "0.4",
        "--hi",
        "0.7071",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).starts_with("error kind=bracket"));
}

#[test]
fn dynsys_first_row() {
    let out = treerecon(&[
        "dynsys",
        "--q",
        "4",
        "--d",
        "2",
        "--lambda1",
        "0.7",
        "--lambda2",
        "0.1",
        "--x0",
        "0.1",
        "--z0",
        "0",
        "--iters",
        "1",
    ]);
    assert!(out.status.success());
    let csv = text(&out.stdout);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,X,Z"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[1] - 0.1044027).abs() < 1e-7 && (row[2] - 0.0032013).abs() < 1e-7);
    assert!(text(&out.stderr).contains("classification=AMBIGUOUS"));
}

#[test]
fn output_file_and_summary_routing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let out = treerecon(&[
        "exact",
        "--q",
        "2",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.3",
        "--d",
        "1",
        "--n",
        "1",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stderr.is_empty());
    assert!(text(&out.stdout).starts_with("record=exact"));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "level,x,y,z,u,v,w,se_x,se_y,se_z,se_u,se_v,se_w");
    assert_eq!(lines[1], "0,0.75,-0.25,-0.25,0.5625,0.0625,0.0625,0,0,0,0,0,0");
    assert!(lines[2].starts_with("1,0.1475,-0.1025,-0.0225,"));
}

#[test]
fn origin_start_writes_header_only() {
    let out = treerecon(&[
        "dynsys",
        "--q",
        "4",
        "--d",
        "2",
        "--lambda1",
        "0.7",
        "--lambda2",
        "0.1",
        "--x0",
        "0",
        "--z0",
        "0",
    ]);
    assert!(out.status.success());
    assert_eq!(text(&out.stdout), "iter,X,Z\n");
}

#[test]
fn unwritable_output_exits_with_validation_code() {
    let out = treerecon(&[
        "exact",
        "--q",
        "2",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.3",
        "--d",
        "1",
        "--n",
        "1",
        "--output",
        "/nonexistent/dir/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn golden_suite_is_reproducible_across_runs_and_threads() {
    for args in GOLDEN_SUITE {
        let mut outputs = Vec::new();
        for threads in ["1", "3", "1"] {
            let mut full = vec!["--threads", threads];
            full.extend_from_slice(args);
            let out = treerecon(&full);
            outputs.push((out.status.code(), out.stdout, out.stderr));
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]), "{args:?}");
        assert_eq!(outputs[0].0, Some(0), "{args:?}: {}", text(&outputs[0].2));
    }
}

#[test]
fn summaries_echo_resolved_parameters() {
    let out = treerecon(&[
        "popdyn",
        "--q",
        "3",
        "--p0",
        "0.5",
        "--p1",
        "0.1",
        "--p2",
        "0.1",
        "--d",
        "2",
        "--population",
        "100",
        "--levels",
        "2",
    ]);
    assert!(out.status.success());
    let summary = text(&out.stderr);
    for key in ["q=3", "p0=0.5", "lambda1=0.4", "d=2", "population=100", "levels=2", "seed=0", "verdict="] {
        assert!(summary.contains(key), "{key} missing from {summary}");
    }
}
