use std::fs;
use std::process::{Command, Output};

fn stratq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratq"))
        .args(args)
        .output()
        .expect("spawn stratq")
}

fn stdout(args: &[&str]) -> String {
    let out = stratq(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let p = path.to_str().unwrap();
        stdout(&[
            "simulate",
            "--lambda",
            "1",
            "--rates",
            "1.2,0.8",
            "--policy",
            "r:1",
            "--horizon",
            "5000",
            "--seed",
            "3",
            "--out",
            p,
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let full = stdout(&["equilibrium", "--lambda", "0.5:6:12", "--N", "20"]);
    assert_eq!(
        full,
        stdout(&["equilibrium", "--lambda", "0.5:6:12", "--N", "20"])
    );
}

#[test]
fn missing_equilibria_are_na_rows() {
    let csv = stdout(&["equilibrium", "--lambda", "2", "--N", "3"]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,N,count,index,mu,mean_wait,utility,idle,rejected_roots"
    );
    assert!(lines.next().unwrap().starts_with("2,3,0,NA,NA,NA,NA,NA,"));
    let json = stdout(&["equilibrium", "--lambda", "2", "--N", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v[0]["mu"].is_null());
}

#[test]
fn sidecar_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("staff.csv");
    stdout(&[
        "--c-s",
        "2",
        "staffing",
        "--lambda",
        "20,40",
        "--out",
        out.to_str().unwrap(),
    ]);
    let side = out.with_extension("run.json");
    let spec: serde_json::Value = serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap();
    assert_eq!(spec["command"], "staffing");
    assert_eq!(spec["model"]["c_S"], 2.0);
    assert_eq!(spec["rows"], 2);
    assert_eq!(spec["invocation"]["command"]["lambda"]["text"], "20,40");
    assert!(spec["extra"]["a_star"].as_f64().unwrap() > 0.2);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    fs::write(&cfg, r#"{"family":"polynomial","c_E":1,"p":1,"c_S":1,"w":1}"#).unwrap();
    let linear = stdout(&["--config", cfg.to_str().unwrap(), "staffing", "--lambda", "100"]);
    let quadratic = stdout(&[
        "--config",
        cfg.to_str().unwrap(),
        "--cost",
        "poly:1:2",
        "staffing",
        "--lambda",
        "100",
    ]);
    assert_ne!(linear, quadratic);
    assert_eq!(quadratic, stdout(&["staffing", "--lambda", "100"]));
}

#[test]
fn invalid_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"family":"polynomial","c_E":-1,"p":2}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", bad.to_str().unwrap(), "staffing", "--lambda", "10"],
        vec!["--config", "/nonexistent/model.json", "poa", "--table"],
        vec!["equilibrium", "--lambda", "1", "--N", "1"],
        vec!["equilibrium", "--lambda", "-1", "--N", "4"],
        vec!["--cost", "poly:1:0.5", "staffing", "--lambda", "10"],
        vec![
            "simulate", "--lambda", "1", "--rates", "1,1", "--policy", "fastest",
        ],
        vec!["collapse", "--rates", "1,2,3,4,5,6,7,8,9"],
    ];
    for args in cases {
        let out = stratq(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn poa_table_rows_follow_q() {
    let csv = stdout(&["poa", "--table"]);
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        vec![1.001, 1.01, 1.1]
    );
    assert!(rows.windows(2).all(|w| w[1][3] < w[0][3]));
    assert!((rows[0][3] - 2.517).abs() < 0.01);
}

#[test]
fn routing_sweep_accepts_negative_exponents() {
    let csv = stdout(&["routing", "--r", "-2,-1,0,1"]);
    let mu: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mu.len(), 4);
    assert!(mu.windows(2).all(|w| w[1] < w[0]));
}
