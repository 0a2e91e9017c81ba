mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const DIVERGENT: &str = "a,b,c\n1,1.000001,1\n-1,2,2.000001\n2,3.000002,3\n-2,4,4.000002\n0.5,5.0000005,5\n,10,-10\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linimpute"))
        .args(args)
        .env_remove("LINIMPUTE_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn without_timestamp(p: &Path) -> String {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# generated_at:"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn median_impute_fills_column_medians() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "a,b\n1,10\nNA,20\n3,NA\n8,40\n");
    let out = dir.path().join("out.csv");
    let o = run(&["impute", s(&input), "--method", "mi", "--missing-token", "NA", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), "a,b\n1,10\n3,20\n3,20\n8,40\n");

    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out.csv.json")).unwrap()).unwrap();
    assert_eq!(diag["method"], "mi");
    assert_eq!(diag["imputed_cells"], 2);
    assert_eq!(diag["rows"], 4);
}

#[test]
fn complete_input_is_copied_with_zero_imputations() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "a,b\n1,2\n3,5\n4,4\n");
    for method in ["oli", "irmi", "mi", "mean"] {
        let out = dir.path().join(format!("{method}.csv"));
        let diag = dir.path().join(format!("{method}.json"));
        let o = run(&["impute", s(&input), "--method", method, "--out", s(&out), "--diagnostics", s(&diag)]);
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(fs::read_to_string(&out).unwrap(), "a,b\n1,2\n3,5\n4,4\n");
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&diag).unwrap()).unwrap();
        assert_eq!(v["imputed_cells"], 0, "{method}");
    }
}

#[test]
fn oli_keeps_observed_cells() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "a,b,c\n1,2.5,3\n2,,5\n3,6.5,\n4,8,9\n,10,11.5\n6,12,13\n7,13.5,15\n");
    let out = dir.path().join("out.csv");
    let o = run(&["impute", s(&input), "--variant", "regressed", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = linimpute::dataset::load_csv(&out, "").unwrap();
    let orig = linimpute::dataset::load_csv(&input, "").unwrap();
    assert_eq!(ds.n_missing(), 0);
    for r in 0..orig.n_rows() {
        for c in 0..3 {
            if !orig.is_missing(r, c) {
                assert_eq!(ds.value(r, c), orig.value(r, c));
            }
        }
    }
}

#[test]
fn input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.csv");
    let cases = [
        ("ragged.csv", "a,b\n1,2\n3\n"),
        ("text.csv", "a,b\n1,x\n3,4\n"),
        ("empty.csv", "a,b\n"),
        ("constant_missing.csv", "a,b\n1,2\n,3\n,4\n"),
    ];
    for (name, text) in cases {
        let input = write(&dir, name, text);
        let o = run(&["impute", s(&input), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert!(!o.stderr.is_empty());
    }
    let o = run(&["impute", "/nonexistent/file.csv", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["impute"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["impute", "x.csv", "--method", "bogus", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn singular_regression_exits_two() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dup.csv", "a,b,c\n1,1,5\n2,2,\n3,3,7\n4,4,1\n5,5,2\n");
    let out = dir.path().join("out.csv");
    for method in ["oli", "irmi"] {
        let o = run(&["impute", s(&input), "--method", method, "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{method}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"), "{method}");
    }
    let o = run(&["impute", s(&input), "--lambda", "0.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn irmi_divergence_exits_three_without_output() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "div.csv", DIVERGENT);
    let out = dir.path().join("out.csv");
    let o = run(&["impute", s(&input), "--method", "irmi", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    assert!(!out.exists());
    assert!(!dir.path().join("out.csv.json").exists());

    let o = run(&["impute", s(&input), "--method", "oli", "--out", s(&out)]);
    assert!(o.status.success());
}

#[test]
fn benchmark_report_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let iris = common::iris_path();
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        let o = run(&["benchmark", s(&iris), "--reps", "3", "--seed", "11", "--jobs", jobs, "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = without_timestamp(&a);
    assert_eq!(text, without_timestamp(&b));
    assert!(text.contains("# seed: 11"));
    assert!(text.contains("# prng: "));
    assert!(text.contains("method,variant,mean_mse,std_mse,converged,repetitions,cap_hits"));
    for row in ["oli,direct,", "oli,regressed,", "irmi,-,", "mi,-,"] {
        assert!(text.lines().any(|l| l.starts_with(row)), "missing {row}");
    }
}

#[test]
fn seed_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let iris = common::iris_path();
    let via_env = dir.path().join("env.csv");
    let via_flag = dir.path().join("flag.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_linimpute"))
        .args(["benchmark", s(&iris), "--reps", "2", "--methods", "mi", "--out", s(&via_env)])
        .env("LINIMPUTE_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = run(&["benchmark", s(&iris), "--reps", "2", "--methods", "mi", "--seed", "42", "--out", s(&via_flag)]);
    assert!(o.status.success());
    assert_eq!(without_timestamp(&via_env), without_timestamp(&via_flag));
}

#[test]
fn failing_method_is_reported_not_fatal() {
    let dir = TempDir::new().unwrap();
    // Four rows cannot support regressions on five other features.
    let input = write(
        &dir,
        "wide.csv",
        "a,b,c,d,e,f\n1,2,3,4,5,6\n2,1,4,3,6,5\n3,5,1,6,2,4\n6,4,5,1,3,2\n",
    );
    let out = dir.path().join("out.csv");
    let o = run(&["benchmark", s(&input), "--rate", "0.05", "--reps", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let row = |prefix: &str| text.lines().find(|l| l.starts_with(prefix)).unwrap().to_string();
    assert!(row("oli,direct,").ends_with(",0,2,0"), "{}", row("oli,direct,"));
    assert!(row("irmi,-,").ends_with(",0,2,0"));
    assert!(row("mi,-,").ends_with(",2,2,0"));
}

#[test]
fn simulate_outputs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    for figure in ["1", "2a", "2b"] {
        let a = dir.path().join(format!("{figure}_a.csv"));
        let b = dir.path().join(format!("{figure}_b.csv"));
        for out in [&a, &b] {
            let o = run(&[
                "simulate", "--figure", figure, "--samples", "300", "--reps", "2", "--seed", "5", "--out", s(out),
            ]);
            assert!(o.status.success(), "{figure}: {}", String::from_utf8_lossy(&o.stderr));
        }
        assert_eq!(without_timestamp(&a), without_timestamp(&b), "figure {figure}");
    }
}
