use std::path::PathBuf;
use std::process::{Command, Output};

use multilib_caching::sim::decode_dump;
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn mlcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlcache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_ok(args: &[&str]) -> Value {
    let out = mlcache(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn with_config(name: &str, rest: &[&str]) -> Vec<String> {
    let mut v = vec!["--config".to_string(), config(name).display().to_string()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

fn run_config(name: &str, rest: &[&str]) -> Output {
    let args = with_config(name, rest);
    mlcache(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn tradeoff_corners() {
    let v = json_ok(&["tradeoff", "--n", "2", "--k", "2", "--kind", "exact2x2"]);
    let corners: Vec<(String, String)> = v["outputs"]["corners"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["memory"].as_str().unwrap().into(),
                c["rate"].as_str().unwrap().into(),
            )
        })
        .collect();
    let expect = [("0", "2"), ("1/2", "1"), ("1", "1/2"), ("2", "0")];
    assert_eq!(corners, expect.map(|(a, b)| (a.to_string(), b.to_string())));

    let out = mlcache(&[
        "tradeoff",
        "--n",
        "1",
        "--k",
        "1",
        "--kind",
        "scheme",
        "--samples",
        "1",
        "--format",
        "csv",
    ]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "memory,rate,memory_decimal,rate_decimal,corner\n0,1,0,1,true\n1,0,1,0,true\n"
    );

    let out = mlcache(&[
        "tradeoff",
        "--n",
        "3",
        "--k",
        "2",
        "--kind",
        "scheme",
        "--samples",
        "1",
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\n3/2,1/2,1.5,0.5,true\n"), "{text}");
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(
        mlcache(&["tradeoff", "--n", "3", "--k", "2", "--kind", "exact2x2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mlcache(&["tradeoff", "--n", "2", "--k", "2", "--kind", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(mlcache(&["allocate"]).status.code(), Some(2));
    assert_eq!(
        run_config("equal_n3.json", &["sweep"]).status.code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"libraries":[{"num_files":2,"alpha":"1/2"},{"num_files":2,"alpha":"1/3"}],"num_users":2,"cache_size":"1"}"#,
    )
    .unwrap();
    let out = mlcache(&["--config", bad.to_str().unwrap(), "allocate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("normalization sum = 5/6 ≠ 1"));
}

#[test]
fn allocate_with_oracle() {
    let out = run_config("example_s2.json", &["allocate", "--oracle", "1/100"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        v["outputs"]["trace"]["allocation"],
        serde_json::json!(["2/5", "3/5"])
    );
    assert_eq!(v["outputs"]["trace"]["rate"], "1/2");
    assert_eq!(v["outputs"]["oracle"]["agrees"], true);

    for name in ["unequal_n.json", "equal_n3.json"] {
        let out = run_config(name, &["allocate", "--oracle", "1/100"]);
        assert!(out.status.success(), "{name}");
    }
}

#[test]
fn allocate_at_zero_cache() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    std::fs::write(
        &path,
        r#"{"libraries":[{"num_files":2,"alpha":"2/5"},{"num_files":2,"alpha":"3/5"}],"num_users":2,"cache_size":"0"}"#,
    )
    .unwrap();
    let v = json_ok(&[
        "--config",
        path.to_str().unwrap(),
        "allocate",
        "--kind",
        "exact2x2",
    ]);
    assert_eq!(
        v["outputs"]["trace"]["allocation"],
        serde_json::json!(["0", "0"])
    );
    assert_eq!(v["outputs"]["trace"]["rate"], "2");
}

#[test]
fn sweep_segments_file() {
    let dir = tempfile::tempdir().unwrap();
    let seg = dir.path().join("segments.csv");
    let out = run_config(
        "example_s2.json",
        &[
            "sweep",
            "--samples",
            "10",
            "--format",
            "csv",
            "--segments",
            seg.to_str().unwrap(),
        ],
    );
    assert!(out.status.success());
    let samples = String::from_utf8(out.stdout).unwrap();
    assert!(samples.starts_with("lambda,rate,lambda_decimal,rate_decimal\n"));
    assert!(samples.contains("\n2/5,1/2,0.4,0.5\n"));
    assert!(!samples.contains('\r'));
    let segments = std::fs::read_to_string(seg).unwrap();
    assert_eq!(segments.lines().count(), 6);
    assert!(segments.contains("\n7/10,4/5,-2/5,3/2,"));
}

#[test]
fn converse_reports() {
    let v = json_ok(
        &with_config("unequal_n.json", &["converse"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert_eq!(
        v["outputs"]["concatenated"]["betas"],
        serde_json::json!(["4/3", "2/3"])
    );
    assert_eq!(v["outputs"]["gap"]["status"], "open");
    assert_eq!(v["outputs"]["gap"]["converse_kind"], "cutset");

    let v = json_ok(
        &with_config("example_s2.json", &["converse"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert_eq!(v["outputs"]["gap"]["gap"], "0");
    assert_eq!(v["outputs"]["gap"]["status"], "tight");
}

#[test]
fn simulate_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("run.mlcd");
    let out = run_config(
        "example_s2.json",
        &["--seed", "5", "simulate", "--dump", dump.to_str().unwrap()],
    );
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["outputs"]["demands_checked"], 16);
    assert_eq!(v["outputs"]["measured_rate"], "1/2");
    let d = decode_dump(&std::fs::read(dump).unwrap()).unwrap();
    assert_eq!(d.files.len(), 2);
    assert_eq!(d.caches.len(), 2);
    assert_eq!(d.payloads.len(), 16);

    let out = run_config(
        "example_s2.json",
        &["simulate", "--alloc", "explicit", "--split", "1,0"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds its content"));
    let out = run_config("example_s2.json", &["simulate", "--bits", "15"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple of 10 bits"));
}

#[test]
fn records_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run_config(
            "unequal_n.json",
            &["--seed", "3", "--out", path.to_str().unwrap(), "simulate"],
        );
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(v["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(v["outputs"]["measured_rate"], v["outputs"]["formula_rate"]);
}
