use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn advol(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advol"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = advol(dir, args);
    assert!(
        out.status.success(),
        "advol {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Drops the `# command:` line, the only place the flags differ.
fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# command:"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn calibrate_constant(dir: &Path, out: &str, jobs: &str) {
    ok(
        dir,
        &[
            "--jobs",
            jobs,
            "calibrate",
            "--family",
            "constant",
            "--theta0",
            "1,0,0",
            "--reps",
            "100",
            "--seed",
            "5",
            "--out",
            out,
        ],
    );
}

#[test]
fn zero_replicates_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = advol(
        dir.path(),
        &[
            "calibrate",
            "--family",
            "constant",
            "--theta0",
            "1,0,0",
            "--reps",
            "0",
            "--seed",
            "1",
            "--out",
            "x.cv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--reps"));
    assert!(!dir.path().join("x.cv").exists());
}

#[test]
fn unknown_flags_and_bad_values_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(advol(dir.path(), &["fit", "--bogus"]).status.code(), Some(2));
    let out = advol(
        dir.path(),
        &[
            "calibrate",
            "--family",
            "garch11",
            "--theta0",
            "1,0.5,0.6",
            "--seed",
            "1",
            "--out",
            "x.cv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_names_line_and_column() {
    let dir = TempDir::new().unwrap();
    calibrate_constant(dir.path(), "c.cv", "1");
    fs::write(dir.path().join("bad.csv"), "t,y\n0,1.0\n1,oops\n").unwrap();
    let out = advol(
        dir.path(),
        &["fit", "--data", "bad.csv", "--family", "constant", "--schedule", "c.cv"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("`y`"), "{err}");
}

#[test]
fn schedule_family_must_match() {
    let dir = TempDir::new().unwrap();
    calibrate_constant(dir.path(), "c.cv", "1");
    ok(
        dir.path(),
        &["simulate", "--scenario", "low-garch", "--seed", "1", "--out-dir", "s"],
    );
    let out = advol(
        dir.path(),
        &[
            "fit",
            "--data",
            "s/rep_001.csv",
            "--family",
            "garch11",
            "--schedule",
            "c.cv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_jobs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    calibrate_constant(d, "one.cv", "1");
    calibrate_constant(d, "four.cv", "4");
    assert_eq!(body(&d.join("one.cv")), body(&d.join("four.cv")));
    assert!(fs::read_to_string(d.join("one.cv"))
        .unwrap()
        .starts_with("# command: advol calibrate"));

    ok(
        d,
        &[
            "--jobs",
            "1",
            "simulate",
            "--scenario",
            "high-garch",
            "--seed",
            "9",
            "--reps",
            "2",
            "--out-dir",
            "a",
        ],
    );
    ok(
        d,
        &[
            "--jobs",
            "3",
            "simulate",
            "--scenario",
            "high-garch",
            "--seed",
            "9",
            "--reps",
            "2",
            "--out-dir",
            "b",
        ],
    );
    for f in ["rep_001.csv", "rep_002.csv"] {
        assert_eq!(body(&d.join("a").join(f)), body(&d.join("b").join(f)));
    }
    assert_ne!(body(&d.join("a/rep_001.csv")), body(&d.join("a/rep_002.csv")));

    for (jobs, out) in [("1", "e1.csv"), ("4", "e4.csv")] {
        ok(
            d,
            &[
                "--jobs",
                jobs,
                "evaluate",
                "--data",
                "a/rep_001.csv",
                "--schedule",
                "one.cv",
                "--parametric",
                "garch11",
                "--endpoints",
                "600:700",
                "--out",
                out,
            ],
        );
    }
    assert_eq!(body(&d.join("e1.csv")), body(&d.join("e4.csv")));
}

#[test]
fn self_comparison_has_unit_ratio() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &["simulate", "--scenario", "low-garch", "--seed", "2", "--out-dir", "s"],
    );
    ok(
        d,
        &[
            "evaluate",
            "--data",
            "s/rep_001.csv",
            "--parametric",
            "constant",
            "--baseline",
            "parametric-constant",
            "--estimation-window",
            "100",
            "--endpoints",
            "200:400",
            "--out",
            "e.csv",
        ],
    );
    let text = fs::read_to_string(d.join("e.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("t,")) {
        let ratio: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(ratio, 1.0, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 201);
}

#[test]
fn simulate_fit_forecast_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    calibrate_constant(d, "c.cv", "1");
    ok(
        d,
        &[
            "simulate",
            "--scenario",
            "low-garch",
            "--seed",
            "4",
            "--reps",
            "1",
            "--out-dir",
            "s",
        ],
    );
    let data = fs::read_to_string(d.join("s/rep_001.csv")).unwrap();
    assert!(data.contains("# scenario hash"));
    assert!(data.lines().any(|l| l == "t,y,sigma2_true,regime"));

    ok(
        d,
        &[
            "fit",
            "--data",
            "s/rep_001.csv",
            "--family",
            "constant",
            "--schedule",
            "c.cv",
            "--endpoints",
            "600:900:100",
            "--out",
            "fit.csv",
        ],
    );
    let fit = fs::read_to_string(d.join("fit.csv")).unwrap();
    let rows: Vec<&str> = fit.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "t,k_hat,interval_start,interval_len,omega,alpha,beta,stopped,sup_stats"
    );
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        let (t, start, len): (usize, usize, usize) = (
            cols[0].parse().unwrap(),
            cols[2].parse().unwrap(),
            cols[3].parse().unwrap(),
        );
        assert_eq!(start + len, t + 1);
        assert!(cols[4].parse::<f64>().unwrap() > 0.0);
    }

    let out = ok(
        d,
        &[
            "forecast",
            "--data",
            "s/rep_001.csv",
            "--family",
            "constant",
            "--schedule",
            "c.cv",
            "--endpoints",
            "700:702",
            "--horizon",
            "1,3",
        ],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,horizon,sigma2_forecast");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("700,1,") && rows[2].starts_with("700,3,"));

    ok(
        d,
        &[
            "evaluate",
            "--data",
            "s/rep_001.csv",
            "--schedule",
            "c.cv",
            "--parametric",
            "garch11",
            "--proxy",
            "true-sigma2",
            "--endpoints",
            "600:800",
            "--out",
            "e.csv",
        ],
    );
    let e = fs::read_to_string(d.join("e.csv")).unwrap();
    assert!(e.contains("# proxy=true-sigma2"));
    assert!(e.lines().any(|l| l.starts_with("# adaptive-constant,")));
    assert!(e
        .lines()
        .any(|l| l.starts_with("# parametric-garch11,") && l.contains(",1,")));
}

#[test]
fn several_parameter_points_give_a_composite() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "calibrate",
            "--family",
            "constant",
            "--theta0",
            "1,0,0",
            "--theta0",
            "3,0,0",
            "--reps",
            "100",
            "--seed",
            "8",
            "--out",
            "cv.txt",
        ],
    );
    let load = |name: &str| adaptive_vol::schedule::CriticalValueSchedule::load(&d.join(name)).unwrap();
    let (a, b, all) = (load("cv.1.txt"), load("cv.2.txt"), load("cv.txt"));
    for k in 0..all.values().len() {
        assert_eq!(all.z(k), a.z(k).max(b.z(k)));
    }
    assert_eq!(all.meta.sources.len(), 2);
}
