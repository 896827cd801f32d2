//! End-to-end tests of the `hd` binary.

use std::path::Path;
use std::process::{Command, Output};

fn hd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn solve_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "ls.json",
        r#"{"family":"ls","n":8,"m":5,"seed":1}"#,
    );
    let out = dir.path().join("trace.csv");
    let o = hd(&[
        "solve",
        "--config",
        &config,
        "--method",
        "hd_explicit_yq",
        "--step",
        "0.1",
        "--iters",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("k,"), "{header}");
    assert!(header.contains("hamiltonian"));
    assert_eq!(lines.count(), 50);
}

#[test]
fn cg_needs_no_step() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "ls.json", r#"{"family":"ls","n":6,"seed":2}"#);
    let out = dir.path().join("cg.csv");
    let o = hd(&[
        "solve",
        "--config",
        &config,
        "--method",
        "cg",
        "--iters",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let out = out.to_str().unwrap();
    let good = write(dir.path(), "ok.json", r#"{"family":"toy1d"}"#);
    let bad_family = write(dir.path(), "bad.json", r#"{"family":"svm"}"#);
    let bad_lambda = write(
        dir.path(),
        "neg.json",
        r#"{"family":"ls","n":3,"lambda":-1}"#,
    );

    let cases: Vec<Vec<&str>> = vec![
        vec![
            "solve",
            "--config",
            &bad_family,
            "--method",
            "gd",
            "--step",
            "0.1",
            "--out",
            out,
        ],
        vec![
            "solve",
            "--config",
            &bad_lambda,
            "--method",
            "gd",
            "--step",
            "0.1",
            "--out",
            out,
        ],
        vec![
            "solve",
            "--config",
            "/nonexistent/config.json",
            "--method",
            "gd",
            "--step",
            "0.1",
            "--out",
            out,
        ],
        vec![
            "solve", "--config", &good, "--method", "newton", "--step", "0.1", "--out", out,
        ],
        vec!["solve", "--config", &good, "--method", "gd", "--out", out],
        vec![
            "solve", "--config", &good, "--method", "gd", "--step", "-1", "--out", out,
        ],
        vec!["certify", "--config", &bad_family],
    ];
    for args in cases {
        let o = hd(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn certify_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "toy.json", r#"{"family":"toy1d"}"#);
    let o = hd(&["certify", "--config", &config]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 1);
    assert_eq!(v["f_star"], 0.0);
    assert!(v["tolerance"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn check_all_passes() {
    let o = hd(&["check", "all", "--seed", "7"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.lines().last().unwrap().ends_with("checks passed"));
}

#[test]
fn small_ls_bench_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("out");
    let o = hd(&[
        "bench",
        "ls-affine",
        "--n",
        "12",
        "--jmax",
        "2",
        "--budget",
        "100",
        "--outdir",
        outdir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for file in [
        "sweep.json",
        "objective_error.svg",
        "hd_hamiltonian.svg",
        "traces/hd_explicit_yq_j2.csv",
        "traces/cg_j0.csv",
    ] {
        assert!(outdir.join(file).is_file(), "missing {file}");
    }
}
