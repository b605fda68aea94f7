use std::process::{Command, Output};

fn delta_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delta-sim"))
        .args(args)
        .env_remove("DELTA_SIM_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL_PLANE: [&str; 4] = [
    "--override",
    "scenarios.sweep2d.delta_o.count=3",
    "--override",
    "scenarios.sweep2d.delta_mu.count=2",
];

#[test]
fn validate_prints_the_hash() {
    let o = delta_sim(&["validate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("ok "));
    assert_eq!(text.trim().len(), 3 + 64);
}

#[test]
fn sweep2d_writes_one_row_per_cell() {
    let mut args = vec!["sweep2d"];
    args.extend(SMALL_PLANE);
    let o = delta_sim(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "delta_o,delta_mu,eta,converged");
    assert_eq!(rows.len(), 1 + 6);
    assert!(rows[1..].iter().all(|r| r.ends_with(",1")));
}

#[test]
fn predict_reports_all_cases() {
    let o = delta_sim(&["predict"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let cases = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("temperature"))
        .count();
    assert_eq!(cases, 4);
    assert!(text.contains("# boost "));
    assert!(text.contains("# cold ground fraction "));
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, via_env: bool| {
        let path = dir.path().join(format!("t{threads}{via_env}.csv"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_delta-sim"));
        cmd.arg("sweep2d").args(SMALL_PLANE).arg("--out").arg(&path);
        if via_env {
            cmd.env("DELTA_SIM_THREADS", threads);
        } else {
            cmd.env_remove("DELTA_SIM_THREADS")
                .args(["--threads", threads]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(path).unwrap()
    };
    let one = run("1", false);
    assert_eq!(one, run("4", false));
    assert_eq!(one, run("3", true));
}

#[test]
fn bad_thread_variable_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_delta-sim"))
        .arg("validate")
        .env("DELTA_SIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let bad = delta_sim(&["validate", "--override", "physics.T2_spin=-1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("T2_spin"));

    let typo = delta_sim(&["validate", "--override", "cavities.microwave.kapa1=1"]);
    assert_eq!(typo.status.code(), Some(1));

    let missing = delta_sim(&["validate", "--config", "/nonexistent/run.json"]);
    assert_eq!(missing.status.code(), Some(1));

    let stuck = delta_sim(&["solve", "--override", "numerics.max_iter=1"]);
    assert_eq!(stuck.status.code(), Some(2));

    assert_eq!(delta_sim(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(delta_sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_reports_operating_point() {
    let o = delta_sim(&["solve"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in [
        "config_hash ",
        "eta ",
        "kappa_abs_hz ",
        "microwave_reflection 0.677",
        "iterations ",
    ] {
        assert!(text.contains(key), "missing {key}: {text}");
    }
}
