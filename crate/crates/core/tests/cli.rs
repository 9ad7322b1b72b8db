//! End-to-end runs of the command-line interface through `cli::run`.

use prio_aoi::cli::run;
use serde_json::Value;

fn exec(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("prio-aoi").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn json(args: &[&str]) -> Value {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let (code, out, err) = exec(&full);
    assert_eq!(code, 0, "{err}");
    serde_json::from_str(&out).unwrap()
}

#[test]
fn eval_reports_total_age() {
    let v = json(&["eval", "--N", "3", "--lambda", "0.62", "--discipline", "wq"]);
    let total = v["total"].as_f64().unwrap();
    assert!((total - 12.18).abs() / 12.18 < 0.01);
    assert_eq!(v["per_stream"].as_array().unwrap().len(), 3);
    assert_eq!(v["N"], 3);
    assert_eq!(v["discipline"], "wq");

    let single = json(&[
        "eval",
        "-N",
        "1",
        "--lambda",
        "1",
        "--mu",
        "1",
        "--discipline",
        "nq",
    ]);
    assert_eq!(single["total"].as_f64().unwrap(), 2.0);
}

#[test]
fn eval_table_lists_every_stream() {
    let (code, out, _) = exec(&["eval", "--N", "3", "--lambda", "0.62", "--discipline", "nq"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("total")));
    assert!(out.lines().any(|l| l.starts_with('3')));
}

#[test]
fn exit_codes() {
    assert_eq!(exec(&["eval", "--N", "2", "--lambda", "1"]).0, 0);
    // Bad flags and invalid values are usage errors.
    assert_eq!(exec(&["bogus"]).0, 1);
    assert_eq!(exec(&["eval", "--N", "2"]).0, 1);
    let (code, _, err) = exec(&["eval", "--N", "0", "--lambda", "1"]);
    assert_eq!(code, 1);
    assert!(err.contains("InvalidConfig"), "{err}");
    assert_eq!(exec(&["eval", "--N", "2", "--lambda", "-1"]).0, 1);
    // Solver failures exit 2.
    let (code, _, err) = exec(&["optimum", "--N", "3", "--lo", "2", "--hi", "3"]);
    assert_eq!(code, 2);
    assert!(err.contains("BracketError"), "{err}");
    let (code, _, err) = exec(&["crossing", "--N", "3", "--lo", "0.05", "--hi", "1"]);
    assert_eq!(code, 2);
    assert!(err.contains("NoSignChange"), "{err}");
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = exec(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("table2"));
}

#[test]
fn sweep_row_counts() {
    let (code, out, _) = exec(&[
        "--format",
        "csv",
        "sweep",
        "--N",
        "3",
        "--lambda-min",
        "0.1",
        "--lambda-max",
        "5",
        "--points",
        "50",
        "--log",
    ]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("lambda,discipline,stream,age"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 50 * 4);
    assert_eq!(rows.iter().filter(|r| r.contains(",wq,")).count(), 200);

    let (_, out, _) = exec(&[
        "sweep",
        "--N",
        "1",
        "--lambda-min",
        "1",
        "--lambda-max",
        "1",
        "--points",
        "1",
        "--discipline",
        "wq",
    ]);
    assert_eq!(
        out,
        "lambda,discipline,stream,age\n1,wq,1,2\n1,wq,total,2\n"
    );
}

#[test]
fn sweep_matches_eval_exactly() {
    let (_, out, _) = exec(&[
        "sweep",
        "--N",
        "3",
        "--lambda-min",
        "0.62",
        "--lambda-max",
        "1.62",
        "--points",
        "2",
        "--discipline",
        "nq",
    ]);
    let row = out
        .lines()
        .find(|l| l.starts_with("0.62,nq,total,"))
        .unwrap();
    let swept: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    let v = json(&["eval", "--N", "3", "--lambda", "0.62", "--discipline", "nq"]);
    assert_eq!(swept.to_bits(), v["total"].as_f64().unwrap().to_bits());
}

#[test]
fn optimum_and_crossing() {
    let v = json(&["optimum", "--N", "3", "--discipline", "wq"]);
    assert!((v["lambda_opt"].as_f64().unwrap() - 0.62).abs() <= 0.01);
    assert!((v["age_opt"].as_f64().unwrap() - 12.18).abs() / 12.18 < 0.01);

    let v = json(&["crossing", "--N", "3"]);
    let pass = v["lambda_pass"].as_f64().unwrap();
    assert!((pass - 2.92).abs() <= 0.01, "{pass}");
    let bracket = v["bracket"].as_array().unwrap();
    assert_eq!(bracket.len(), 2);
}

#[test]
fn table2_has_three_rows() {
    let v = json(&["table2"]);
    let rows = v.as_array().unwrap();
    let counts: Vec<u64> = rows.iter().map(|r| r["N"].as_u64().unwrap()).collect();
    assert_eq!(counts, vec![3, 5, 8]);
    let (code, out, _) = exec(&["table2"]);
    assert_eq!(code, 0);
    assert!(out.lines().count() >= 4);
}

#[test]
fn simulate_csv_layout() {
    let (code, out, err) = exec(&[
        "--format",
        "csv",
        "simulate",
        "--N",
        "2",
        "--lambda",
        "1",
        "--discipline",
        "nq",
        "--horizon",
        "1e4",
        "--replications",
        "3",
        "--seed",
        "4",
    ]);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "replication,stream,discipline,lambda,mu,N,age,area,measured_time"
    );
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("0,1,nq,1,1,2,"));

    let v = json(&[
        "simulate",
        "--N",
        "2",
        "--lambda",
        "1",
        "--horizon",
        "1e4",
        "--replications",
        "3",
        "--seed",
        "4",
    ]);
    assert_eq!(v["per_stream_age"].as_array().unwrap().len(), 2);
    assert_eq!(v["replications"].as_array().unwrap().len(), 3);
}
