use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn shrinkage(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinkage"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_trace(dir: &Path, rows: &[(u64, u64)]) -> String {
    let mut text = String::from("t,sales,replenishment\n");
    for (k, (s, r)) in rows.iter().enumerate() {
        text.push_str(&format!("{},{s},{r}\n", k + 1));
    }
    fs::write(dir.join("in.csv"), text).unwrap();
    "in.csv".to_string()
}

const BASELINE: [&str; 15] = [
    "simulate", "--horizon", "60", "--sigma", "5.0", "--lambda", "0.25", "--initial", "15", "--order-qty", "20",
    "--reorder-point", "10", "--seed", "7",
];

#[test]
fn simulate_writes_two_tables() {
    let dir = TempDir::new().unwrap();
    let out = shrinkage(dir.path(), &BASELINE);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
    assert_eq!(rows(&dir.path().join("trace.csv")).len(), 60);
    let truth = rows(&dir.path().join("truth.csv"));
    assert_eq!(truth.len(), 60);
    assert!(truth.iter().all(|r| r.len() == 7));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = ["simulate", "--seed", "11", "--trace-out", "a.csv", "--truth-out", "a_truth.csv"];
    let b = ["simulate", "--seed", "11", "--trace-out", "b.csv", "--truth-out", "b_truth.csv"];
    assert_eq!(code(&shrinkage(dir.path(), &a)), 0);
    assert_eq!(code(&shrinkage(dir.path(), &b)), 0);
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a_truth.csv"), read("b_truth.csv"));

    for args in [&["estimate", "--trace", "a.csv", "--initial", "15", "--mmle", "--out", "r1.json"], &[
        "estimate", "--trace", "a.csv", "--initial", "15", "--mmle", "--out", "r2.json",
    ]] {
        assert_eq!(code(&shrinkage(dir.path(), args)), 0);
    }
    assert_eq!(read("r1.json"), read("r2.json"));
}

#[test]
fn zero_loss_rate_keeps_books_exact() {
    let dir = TempDir::new().unwrap();
    let out = shrinkage(dir.path(), &["simulate", "--lambda", "0", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    for row in rows(&dir.path().join("truth.csv")) {
        assert_eq!(row[3], row[4]);
        assert_eq!(row[5], "0");
    }

    let out = shrinkage(dir.path(), &["replicate-figure", "--lambda", "0", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let fig = rows(&dir.path().join("figure.csv"));
    let series = |name: &str| -> Vec<String> { fig.iter().filter(|r| r[1] == name).map(|r| r[2].clone()).collect() };
    assert_eq!(series("naive_inventory"), series("true_inventory"));
    assert_eq!(series("mmle_inventory"), series("true_inventory"));
}

#[test]
fn estimate_reports_small_loss_rate_without_shrinkage() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&shrinkage(dir.path(), &["simulate", "--lambda", "0", "--seed", "5"])), 0);
    let out = shrinkage(dir.path(), &["estimate", "--trace", "trace.csv", "--initial", "15"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = shrinkage::io::EstimateReport::from_json(&fs::read_to_string(dir.path().join("estimate.json")).unwrap())
        .unwrap();
    assert!(report.lambda_star <= 0.02, "{}", report.lambda_star);
    assert_eq!(report.trajectory.len(), 60);
    assert!(report.mmle.is_none());
}

#[test]
fn estimate_verifies_short_traces() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(dir.path(), &[(3, 0), (4, 0), (2, 10), (5, 0), (1, 0)]);
    let out = shrinkage(
        dir.path(),
        &["estimate", "--trace", &trace, "--initial", "12", "--verify", "--mmle", "--mstep", "gradient20"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("matches"));
    let report = shrinkage::io::EstimateReport::from_json(&fs::read_to_string(dir.path().join("estimate.json")).unwrap())
        .unwrap();
    assert_eq!(report.mmle.map(|m| m.len()), Some(5));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(dir.path(), &[(3, 0), (4, 0)]);
    let cases: &[(&[&str], i32)] = &[
        (&["simulate", "--horizon", "1"], 1),
        (&["simulate", "--lambda", "1.5"], 1),
        (&["simulate", "--bogus"], 1),
        (&["estimate", "--trace", &trace], 1),
        (&["estimate", "--trace", "missing.csv", "--initial", "5"], 1),
        (&["estimate", "--trace", &trace, "--initial", "10", "--mstep", "newton"], 1),
        (&["estimate", "--trace", &trace, "--initial", "10", "--lambda0", "2"], 1),
        (&["filter", "--trace", &trace, "--initial", "10", "--sigma", "5", "--lambda", "0.2", "--mode", "x"], 1),
        // sales exceed what could possibly be on the shelf
        (&["estimate", "--trace", &trace, "--initial", "5"], 2),
        (&["filter", "--trace", &trace, "--initial", "5", "--sigma", "5", "--lambda", "0.2"], 2),
        (&["--help"], 0),
        (&["--version"], 0),
        (&[], 1),
    ];
    for (args, want) in cases {
        let out = shrinkage(dir.path(), args);
        assert_eq!(code(&out), *want, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    fs::write(dir.path().join("bad.csv"), "t,sales,replenishment\n1,3,0\n2,x,0\n").unwrap();
    let out = shrinkage(dir.path(), &["estimate", "--trace", "bad.csv", "--initial", "10"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));

    let out = shrinkage(dir.path(), &["filter", "--trace", &trace, "--initial", "5", "--sigma", "5", "--lambda", "0.2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("period 2"));
}

#[test]
fn filter_single_period_row() {
    let dir = TempDir::new().unwrap();
    let trace = write_trace(dir.path(), &[(4, 0)]);
    let out = shrinkage(
        dir.path(),
        &["filter", "--trace", &trace, "--initial", "10", "--sigma", "5", "--lambda", "0.25", "--beliefs", "b.csv"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&dir.path().join("filter.csv")), vec![vec!["1", "6", "5", "6"]]);
    let beliefs = rows(&dir.path().join("b.csv"));
    assert_eq!(beliefs, vec![vec!["1", "5", "0.25"], vec!["1", "6", "0.75"]]);
}

#[test]
fn filter_modes_differ_when_sales_are_censored() {
    let dir = TempDir::new().unwrap();
    // after period 1 the stock is 2 or 1; selling one unit censors only the lower level
    let trace = write_trace(dir.path(), &[(8, 0), (1, 0)]);
    let mut outputs = Vec::new();
    for mode in ["bayes", "paper"] {
        let beliefs = format!("{mode}.csv");
        let out = shrinkage(
            dir.path(),
            &[
                "filter", "--trace", &trace, "--initial", "10", "--sigma", "5", "--lambda", "0.25", "--mode", mode,
                "--out", "f.csv", "--beliefs", &beliefs,
            ],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read_to_string(dir.path().join(&beliefs)).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
}

#[test]
fn replicate_figure_shape() {
    let dir = TempDir::new().unwrap();
    let out = shrinkage(dir.path(), &["replicate-figure", "--seed", "7", "--out", "fig.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for key in ["sigma0=", "lambda0=", "sigma*=", "lambda*=", "iterations="] {
        assert!(stdout.contains(key), "{stdout}");
    }
    let fig = rows(&dir.path().join("fig.csv"));
    assert_eq!(fig.len(), 240);
    for name in shrinkage::io::PLOT_SERIES {
        assert_eq!(fig.iter().filter(|r| r[1] == name).count(), 60);
    }
}
