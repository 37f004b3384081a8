use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn curvelab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvelab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("CURVELAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn classify_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = curvelab(&["classify", "--poly", "0,1,1", "--N", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("count = 33"), "{text}");
    assert!(text.contains("bound = 217"), "{text}");
    let part: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("classify_partition.json")).unwrap()).unwrap();
    assert_eq!(part["N"], 10);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = curvelab(&["whitney", "--count", "25", "--seed", "11"], d.path());
        assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    }
    let x = fs::read(a.path().join("whitney.csv")).unwrap();
    let y = fs::read(b.path().join("whitney.csv")).unwrap();
    assert!(x.len() > 100);
    assert_eq!(x, y);
    let c = tempfile::tempdir().unwrap();
    curvelab(&["whitney", "--count", "25", "--seed", "12"], c.path());
    assert_ne!(x, fs::read(c.path().join("whitney.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = curvelab(&["sharpness", "--d", "2", "--r", "0.5", "--p1", "1", "--p2", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Hölder relation violated"), "{}", stderr(&o));
    let o = curvelab(&["classify", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = curvelab(&["classify", "--poly", "0,0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"subcommand": "classify", "poly": [0, 1, 1], "typo_field": 3}"#).unwrap();
    let o = curvelab(&["classify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_curvelab")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"subcommand": "classify", "poly": [0, 1, 1], "n_param": 4}"#).unwrap();
    let o = curvelab(&["classify", "--config", cfg.to_str().unwrap(), "--N", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("classify.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["n_param"], 10);
    assert_eq!(rep["fits"]["count"], 33.0);
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

#[test]
fn schema_matches_csv_and_json_round_trips() {
    for (sub, args) in [
        ("classify", vec!["--poly", "0,1,1", "--N", "8"]),
        ("levelset", vec!["--poly", "0,1,1"]),
        ("vdc", vec![]),
        ("whitney", vec!["--count", "5", "--seed", "3"]),
        ("multiplier", vec![]),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let mut full = vec![sub];
        full.extend(&args);
        let o = curvelab(&full, dir.path());
        assert!(matches!(o.status.code(), Some(0) | Some(2)), "{sub}: {}", stderr(&o));
        let s = Command::new(env!("CARGO_BIN_EXE_curvelab")).args([sub, "--schema"]).output().unwrap();
        let schema = String::from_utf8(s.stdout).unwrap();
        let csv_text = fs::read_to_string(dir.path().join(format!("{sub}.csv"))).unwrap();
        assert_eq!(csv_text.lines().next().unwrap(), schema.trim(), "{sub}");

        let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(format!("{sub}.json"))).unwrap()).unwrap();
        let rows = json["rows"].as_array().unwrap();
        let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
        let records: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), rows.len(), "{sub}");
        assert!(!rows.is_empty(), "{sub}");
        for (rec, row) in records.iter().zip(rows) {
            for (field, cell) in rec.iter().zip(row.as_array().unwrap()) {
                match cell {
                    Value::Number(n) => {
                        let x: f64 = field.parse().unwrap();
                        assert!(close(x, n.as_f64().unwrap()), "{sub}: {field} vs {n}");
                    }
                    Value::Bool(b) => assert_eq!(field, b.to_string()),
                    Value::String(t) => assert_eq!(field, t),
                    other => panic!("{sub}: unexpected cell {other}"),
                }
            }
        }
    }
}
