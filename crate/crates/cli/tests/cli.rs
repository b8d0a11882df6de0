use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use barymean::diagnostics::parse_matrices;
use serde_json::Value;

fn barymean(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barymean"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Last line that is not a `#` comment.
fn value_line(o: &Output) -> f64 {
    stdout(o)
        .lines()
        .rfind(|l| !l.starts_with('#') && !l.trim().is_empty())
        .expect("a value line")
        .trim()
        .parse()
        .unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn arithmetic_of_four_scalars() {
    let o = barymean(&["compute", "--mean", "arithmetic", "--arity", "4", "1", "2", "3", "4"]);
    assert!(o.status.success());
    assert!((value_line(&o) - 2.5).abs() < 1e-9);
    let text = stdout(&o);
    assert!(text.contains("scalar_tol=1e-12") && text.contains("spd_tol=1e-10") && text.contains("max_iter=10000"));
}

#[test]
fn weighted_three_mean_weights() {
    let (x, y, z) = (1.5, -2.0, 7.25);
    let o = barymean(&["compute", "--mean", "weighted:2/3", "--", "1.5", "-2", "7.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = 0.4 * x + 0.35 * y + 0.25 * z;
    assert!((value_line(&o) - expected).abs() < 1e-6);
}

#[test]
fn geometric_of_commuting_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.txt", "2\n1 0\n0 4\n\n2\n4 0\n0 1\n\n2\n2 0\n0 2\n");
    let o = barymean(&["compute", "--space", "spd", "--mean", "geometric", "--input", &input]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ms = parse_matrices(&stdout(&o)).unwrap();
    assert_eq!(ms.len(), 1);
    let m = ms[0].matrix();
    assert!((m[(0, 0)] - 2.0).abs() < 1e-9 && (m[(1, 1)] - 2.0).abs() < 1e-9 && m[(0, 1)].abs() < 1e-9);
}

#[test]
fn matrix_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.txt", "2\n2 0.3\n0.3 1\n\n2\n1 -0.2\n-0.2 3\n");
    let out = dir.path().join("out.txt");
    let o = barymean(&[
        "compute",
        "--space",
        "spd",
        "--mean",
        "agm",
        "--arity",
        "2",
        "--input",
        &input,
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = parse_matrices(&fs::read_to_string(&out).unwrap()).unwrap();
    // feed the result back in as a constant pair: the mean of (X, X) is X
    let again = write(dir.path(), "again.txt", &fs::read_to_string(&out).unwrap().repeat(2));
    let o = barymean(&[
        "compute", "--space", "spd", "--mean", "agm", "--arity", "2", "--input", &again,
    ]);
    let second = parse_matrices(&stdout(&o)).unwrap();
    assert!((first[0].matrix() - second[0].matrix()).amax() <= 1e-12);
}

#[test]
fn geometric_trace_stays_under_bound() {
    let o = barymean(&["trace", "--mean", "geometric", "1", "4", "9"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert!(rows.len() > 3);
    for r in rows {
        let d: f64 = r[1].parse().unwrap();
        let b: f64 = r[2].parse().unwrap();
        assert!(d <= b + 1e-12, "{d} > {b}");
    }
    assert!(stdout(&o).contains("iteration,diameter,bound"));
}

#[test]
fn constant_trace_has_one_row() {
    let o = barymean(&["trace", "--mean", "geometric", "5", "5", "5"]);
    assert!(o.status.success());
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn non_contractive_mean_exits_4() {
    let o = barymean(&["trace", "--mean", "left", "--max-iter", "50", "1", "2", "3"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("# converged=false"));
    assert_eq!(csv_rows(&stdout(&o)).len(), 51);
    let o = barymean(&["compute", "--mean", "left", "--max-iter", "50", "1", "2", "3"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn exit_codes() {
    assert_eq!(
        barymean(&["compute", "--mean", "nope", "1", "2", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(barymean(&["compute", "1", "x", "3"]).status.code(), Some(2));
    assert_eq!(
        barymean(&["compute", "--tol", "-1", "1", "2", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(barymean(&["compute", "1", "2"]).status.code(), Some(3));
    assert_eq!(
        barymean(&["compute", "--input", "/no/such/file"]).status.code(),
        Some(5)
    );
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("out.txt");
    let o = barymean(&["compute", "--output", out.to_str().unwrap(), "1", "2", "3"]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn matrix_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let id = write(dir.path(), "id.txt", "2\n1 0\n0 1\n");
    let o = barymean(&["compute", "--space", "spd", "--arity", "2", "--input", &id]);
    assert_eq!(o.status.code(), Some(3));
    let indefinite = write(dir.path(), "bad.txt", "2\n1 0\n0 1\n\n2\n1 2\n2 1\n");
    let o = barymean(&["compute", "--space", "spd", "--arity", "2", "--input", &indefinite]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("matrix 1") && err.contains("eigenvalue"), "{err}");
    let empty = write(dir.path(), "empty.txt", "");
    let o = barymean(&["compute", "--space", "spd", "--input", &empty]);
    assert_eq!(o.status.code(), Some(3));
    let mixed = write(dir.path(), "mixed.txt", "1\n1\n\n2\n1 0\n0 1\n");
    let o = barymean(&["compute", "--space", "spd", "--arity", "2", "--input", &mixed]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "job.json", r#"{"mean": "geometric", "arity": 4}"#);
    let o = barymean(&["compute", "--config", &cfg, "--arity", "2", "2", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((value_line(&o) - 4.0).abs() < 1e-12);
    let bad = write(dir.path(), "bad.json", "{");
    assert_eq!(
        barymean(&["compute", "--config", &bad, "1", "2", "3"]).status.code(),
        Some(2)
    );
}

#[test]
fn help_lists_defaults() {
    for args in [vec!["--help"], vec!["compute", "--help"]] {
        let o = barymean(&args);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(
            text.contains("1e-12") && text.contains("1e-10") && text.contains("10000"),
            "{text}"
        );
    }
}

fn audit_json(args: &[&str]) -> Value {
    let o = barymean(args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

fn property<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["property"] == name)
        .unwrap_or_else(|| panic!("no property {name}"))
}

#[test]
fn geometric_spd_audit_is_monotone() {
    let r = audit_json(&[
        "audit",
        "--mean",
        "geometric",
        "--space",
        "spd",
        "--arity",
        "3",
        "--samples",
        "100",
    ]);
    let mono = property(&r, "monotonicity");
    assert_eq!(mono["pass"], true);
    for field in ["property", "pass", "margin", "witness"] {
        assert!(mono.get(field).is_some());
    }
    assert_eq!(r["header"]["defaults"]["spd_tolerance"], 1e-10);
}

#[test]
fn logarithmic_below_agm() {
    let r = audit_json(&[
        "audit",
        "--mean",
        "logarithmic",
        "--space",
        "spd",
        "--arity",
        "3",
        "--samples",
        "20",
    ]);
    assert_eq!(property(&r, "L_3 <= AGM_3")["pass"], true);
}

#[test]
fn audit_rejects_zero_samples_and_is_deterministic() {
    assert_eq!(barymean(&["audit", "--samples", "0"]).status.code(), Some(2));
    let args = ["audit", "--mean", "harmonic", "--samples", "15", "--seed", "7"];
    assert_eq!(stdout(&barymean(&args)), stdout(&barymean(&args)));
}
