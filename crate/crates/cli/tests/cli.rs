use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcotype"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn verify_is_green() {
    let r = report(&["verify", "--seed", "1"]);
    assert_eq!(r["passed"], true);
    assert!(r["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn bipartite_gap_is_written_as_inf() {
    let r = report(&[
        "gamma",
        "--mode",
        "analytic",
        "--generate",
        "cycle",
        "--n",
        "2",
    ]);
    assert_eq!(r["result"]["value"], "inf");
}

#[test]
fn path_certificate_stays_below_seventeen() {
    let r = report(&[
        "cotype",
        "--generate",
        "path_holding",
        "--n",
        "3",
        "--config",
        r#"{"x": [[0.0], [1.0], [2.0]]}"#,
        "--t",
        "3",
    ]);
    let ratio = r["result"]["ratio"].as_f64().unwrap();
    assert!(ratio <= 17.0 + 1e-8);
    assert_eq!(r["result"]["bound"], 17.0);
}

#[test]
fn reports_echo_their_configuration() {
    let r = report(&[
        "counterexample",
        "--sizes",
        "8,16",
        "--seed",
        "5",
        "--tol",
        "1e-6",
    ]);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["tol"], 1e-6);
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["inputs"]["sizes"], serde_json::json!([8, 16]));
}

#[test]
fn same_seed_same_bytes() {
    let args = [
        "gamma",
        "--mode",
        "search",
        "--generate",
        "random_symmetric",
        "--n",
        "5",
        "--restarts",
        "20",
        "--moves",
        "50",
        "--seed",
        "3",
    ];
    let a = run(&args);
    let mut more = args.to_vec();
    more.extend(["--jobs", "3"]);
    let b = run(&more);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_input_names_the_field() {
    let out = run(&["gamma", "--chain", r#"{"A": [[1.0, "x"]], "pi": [1.0]}"#]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("A[0][1]"));
    let out = run(&["gamma", "--chain", r#"{"A": [[1.0]]}"#]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pi"));
}

#[test]
fn failed_invariant_exits_with_one() {
    let out = run(&["pisier", "--random", "6,2", "--tol=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pisier.residual"));
}

#[test]
fn out_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kalton.json");
    let out = run(&["kalton", "--dims", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["command"], "kalton");
    let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
    assert!(csv.starts_with("command,metric,value\n"));
    assert!(csv.contains("kalton,check:kalton.covering[n=2],pass"));
}

#[test]
fn real_valued_extension_matches_mcshane() {
    let inst = r#"{"source": {"kind": "euclidean", "dim": 2}, "target_dim": 1,
                   "points": [[0, 0], [1, 0], [0, 1], [0.5, 0.5], [2, 2]],
                   "anchors": [0, 1, 2], "values": [[0], [1], [0.5]]}"#;
    let r = report(&["extend", "--instance", inst]);
    let l = r["result"]["l_star"].as_f64().unwrap();
    let mc = r["result"]["mcshane"]["lip"].as_f64().unwrap();
    assert!((l - mc).abs() <= 1e-4 * (1.0 + l));
}

#[test]
fn generated_chains_feed_back_in() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.json");
    assert!(run(&[
        "generate",
        "--kind",
        "cycle",
        "--n",
        "3",
        "--out",
        path.to_str().unwrap()
    ])
    .status
    .success());
    let r = report(&["gamma", "--chain", path.to_str().unwrap()]);
    assert!((r["result"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn weight_certificate_holds_on_a_small_instance() {
    let inst = r#"{"source": {"kind": "euclidean", "dim": 2}, "target_dim": 2,
                   "points": [[0, 0], [1, 0], [0.3, 0.4], [0.9, -0.2]],
                   "anchors": [0, 1], "values": [[0, 0], [0, 1]],
                   "h": [[0, 1, 1, 0], [1, 0, 0, 2], [1, 0, 0, 1], [0, 2, 1, 0]]}"#;
    let r = report(&["hcert", "--instance", inst]);
    assert_eq!(r["result"]["holds"], true);
    assert!(
        run(&["hcert", "--instance", inst, "--p", "0.5"])
            .status
            .code()
            == Some(2)
    );
}
