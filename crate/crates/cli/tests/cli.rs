use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boxcox_core::io::FitReport;
use boxcox_core::simulation::RejectionTable;
use boxcox_core::TestReport;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_boxcox-infer"));
    c.env_remove("BOXCOX_INFER_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Deterministic pseudo-random data with `log y = x1 − x2/2 + x3 + noise`.
fn write_data(dir: &Path, duplicate_first: bool) -> PathBuf {
    let (n, p) = (90, 10);
    let mut s = String::from("y");
    for j in 1..=p {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for i in 0..n {
        let shared = (1.3 * (i as f64 + 0.5) * 0.77).sin() * 1.7;
        let x: Vec<f64> = (0..p)
            .map(|j| {
                if duplicate_first && j < 2 {
                    return shared;
                }
                let t = (i * p + j) as f64;
                ((t * 12.9898).sin() * 43_758.545_3).fract() * 3.0 - 1.5
            })
            .collect();
        let noise = ((i as f64 * 78.233).sin() * 12_345.678).fract();
        let y = (x[0] - 0.5 * x[1] + x[2] + noise).exp();
        s.push_str(&format!("{y}"));
        for v in &x {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    let path = dir.join(if duplicate_first { "dup.csv" } else { "d.csv" });
    std::fs::write(&path, s).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn hypothesis(dir: &Path) -> PathBuf {
    write(dir, "h.json", r#"{"indices":[1,2],"C":[[1,1]],"t":[0]}"#)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_documented_flag() {
    let top = String::from_utf8(run(&["--help"]).stdout).unwrap();
    for cmd in ["fit", "test", "simulate", "quantile", "--threads"] {
        assert!(top.contains(cmd), "{cmd}");
    }
    let test = String::from_utf8(run(&["test", "--help"]).stdout).unwrap();
    for flag in [
        "--data",
        "--response-col",
        "--hypothesis",
        "--alpha",
        "--thresholds",
        "--penalty ",
        "--penalty-a",
        "--lambda ",
        "--path-len",
        "--lambda-min-ratio",
        "--mc-draws",
        "--seed",
        "--out",
        "--threads",
        "BOXCOX_INFER_THREADS",
    ] {
        assert!(test.contains(flag), "test --help lacks {flag}");
    }
    let sim = String::from_utf8(run(&["simulate", "--help"]).stdout).unwrap();
    for flag in ["--setting", "--replicates", "--threads", "--out", "--penalty ", "--penalty-a", "--lambda "] {
        assert!(sim.contains(flag), "simulate --help lacks {flag}");
    }
    let fit = String::from_utf8(run(&["fit", "--help"]).stdout).unwrap();
    for flag in ["--penalty ", "--penalty-a", "--lambda ", "--path-len", "--lambda-min-ratio"] {
        assert!(fit.contains(flag), "fit --help lacks {flag}");
    }
}

#[test]
fn test_reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let hyp = hypothesis(dir.path());
    let outs: Vec<PathBuf> = (0..3).map(|i| dir.path().join(format!("r{i}.json"))).collect();
    for (i, out) in outs.iter().enumerate() {
        let threads = ["1", "2", "1"][i];
        let o = bin()
            .args([
                "test", "--data", s(&data), "--response-col", "0", "--hypothesis", s(&hyp), "--alpha", "0.05",
                "--thresholds", "19", "--penalty", "scad", "--penalty-a", "3.7", "--lambda", "auto", "--mc-draws",
                "20000", "--seed", "42", "--out", s(out),
            ])
            .env("BOXCOX_INFER_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(&outs[0]).unwrap();
    assert_eq!(a, std::fs::read(&outs[1]).unwrap());
    assert_eq!(a, std::fs::read(&outs[2]).unwrap());
    let report: TestReport = serde_json::from_slice(&a).unwrap();
    assert_eq!(report.df, 1);
    assert_eq!(report.mc_draws, 20_000);
    assert_eq!(report.seeds.mc_seed, 42);
    assert!(report.column_names.is_some());
}

#[test]
fn output_format_follows_flag_or_extension() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let hyp = hypothesis(dir.path());
    let base = ["test", "--data", s(&data), "--hypothesis", s(&hyp), "--lambda", "0.1", "--mc-draws", "2000"];
    let text = run(&[&base[..], &["--format", "text"]].concat());
    assert!(text.status.success());
    assert!(String::from_utf8(text.stdout).unwrap().contains("critical value"));
    let csv_path = dir.path().join("r.csv");
    assert!(run(&[&base[..], &["--out", s(&csv_path)]].concat()).status.success());
    assert!(std::fs::read_to_string(&csv_path).unwrap().starts_with("statistic,value,p_value"));
    let json = run(&base);
    assert!(serde_json::from_slice::<TestReport>(&json.stdout).is_ok());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let config = write(dir.path(), "run.json", r#"{"lambda":{"fixed":0.08},"standardize":false,"thresholds":5}"#);
    let o = run(&["fit", "--data", s(&data), "--config", s(&config), "--thresholds", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: FitReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(fit.lambda, 0.08);
    assert_eq!(fit.intercepts.len(), 7);
    assert!(!fit.constrained);
    let hyp = hypothesis(dir.path());
    let o = run(&["fit", "--data", s(&data), "--hypothesis", s(&hyp), "--lambda", "0.08", "--penalty", "mcp", "--penalty-a", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: FitReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(fit.constrained);
    assert!((fit.beta[0] + fit.beta[1]).abs() < 1e-6);
    let bad = write(dir.path(), "bad.json", r#"{"lamda":0.1}"#);
    assert_eq!(run(&["fit", "--data", s(&data), "--config", s(&bad)]).status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), false);
    let hyp = hypothesis(dir.path());
    let rank = write(dir.path(), "rank.json", r#"{"indices":[1,2],"C":[[1,1],[2,2]],"t":[0,0]}"#);
    let range = write(dir.path(), "range.json", r#"{"indices":[11],"C":[[1]],"t":[0]}"#);
    let nan = write(dir.path(), "nan.csv", "y,a\n1,2\n2,NaN\n3,1\n");
    for (args, needle) in [
        (vec!["test", "--data", "/missing.csv", "--hypothesis", s(&hyp)], "cannot open"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&rank)], "rank"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&range)], "out of range"),
        (vec!["test", "--data", s(&nan), "--hypothesis", s(&hyp)], "line 3, column 2"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&hyp), "--alpha", "2"], "alpha"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&hyp), "--penalty", "lasso"], "penalty"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&hyp), "--lambda=-3"], "lambda"),
        (vec!["test", "--data", s(&data), "--hypothesis", s(&hyp), "--mc-draws", "10"], "draws"),
        (vec!["fit", "--data", s(&data), "--response-col", "40"], "response column"),
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    let o = bin().args(["fit", "--data", s(&data)]).env("BOXCOX_INFER_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    // x1 and x2 identical: the sensitivity matrix of the tested block is singular
    let data = write_data(dir.path(), true);
    let hyp = hypothesis(dir.path());
    let o = run(&["test", "--data", s(&data), "--hypothesis", s(&hyp), "--lambda", "0.1", "--no-standardize"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("plug-in matrices"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let setting = write(
        dir.path(),
        "s.json",
        r#"{"n":60,"p":12,"rho_corr":0.5,"g_id":"g1","h1":0.0,"hypothesis_id":"i","seed":3,"test":{"mc_draws":2000,"tuning":{"path_len":12}}}"#,
    );
    let out = dir.path().join("table.csv");
    let o = run(&["simulate", "--setting", s(&setting), "--replicates", "3", "--threads", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let o = run(&["simulate", "--setting", s(&setting), "--replicates", "2", "--h1", "0,0.4", "--baseline"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table: RejectionTable = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(table.rows.len(), 8);
    assert_eq!(table.metadata.replicates, 2);
    assert!(table.outcomes.is_empty());
    let o = run(&["simulate", "--setting", s(&setting), "--replicates", "2", "--format", "text"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("0.00(0.00)"));
    let bad = write(dir.path(), "bad.json", r#"{"n":60}"#);
    assert_eq!(run(&["simulate", "--setting", s(&bad)]).status.code(), Some(2));
}

#[test]
fn quantile_command() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.json", r#"{"psi":[[1]],"tau":[[1]]}"#);
    let o = run(&["quantile", "--input", s(&input), "--alpha", "0.05", "--mc-draws", "200000", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // chi-squared(1) 95% point
    let q = v["quantile"].as_f64().unwrap();
    assert!((q - 3.841_458_820_694_124).abs() / 3.8415 < 0.015, "{q}");
    let bad = write(dir.path(), "bad.json", r#"{"psi":[[1,2]],"tau":[[1]]}"#);
    assert_eq!(run(&["quantile", "--input", s(&bad)]).status.code(), Some(2));
}
