use std::path::Path;
use std::process::{Command, Output};

fn kirlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kirlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn last_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).lines().last().unwrap()).unwrap()
}

#[test]
fn haar_spot_value() {
    let o = kirlab(&[
        "dyadic", "--op", "spectral", "--s", "0.25", "--coef", r#"[{"j":0,"k":0,"coef":1}]"#, "--x", "0.25",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "3.414214");
}

#[test]
fn coupling_family_limit() {
    let o = kirlab(&["converge", "--family", "coupling", "--F", "pow1ph", "--x", "0.367879"]);
    assert!(o.status.success());
    let s = last_json(&o);
    let limit = s["limit"].as_f64().unwrap();
    assert!((limit + 0.135335).abs() < 1e-5, "{limit}");
    assert_eq!(s["verdict"], "converged");
    assert!(stdout(&o).starts_with("h,Q,diff,fitted_order\n"));
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"module": "dyadic", "params": {"#).unwrap();
    let out = dir.path().join("out");
    let o = kirlab(&["--out", out.to_str().unwrap(), "run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"module": "frac", "params": {"s": 0.3, "colour": 1}}"#,
        r#"{"module": "frac", "params": {"s": 0.3}, "extra": true}"#,
        r#"{"module": "nope"}"#,
    ] {
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, body).unwrap();
        let o = kirlab(&["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}");
    }
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(kirlab(&["frac", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(kirlab(&["frac"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let o = kirlab(&["coupling", "--kind", "det", "--F", "sqrt", "--x", "-1"]);
    assert_eq!(o.status.code(), Some(3));
}

fn run_config(cfg: &Path, out: &Path, threads: &str) {
    let o = Command::new(env!("CARGO_BIN_EXE_kirlab"))
        .env("KIRLAB_THREADS", threads)
        .args(["--out", out.to_str().unwrap(), "run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn same_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("frac.json");
    std::fs::write(
        &cfg,
        r#"{"module": "frac", "operation": "regular", "params": {"s": 0.3, "x": [0.0, 0.25, [0.5], "0.75"]}, "seed": 7}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_config(&cfg, &a, "1");
    run_config(&cfg, &b, "3");
    let ca = std::fs::read(a.join("frac.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("frac.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("frac.json")).unwrap(), std::fs::read(b.join("frac.json")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn config_output_directory_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let cfg = dir.path().join("c.json");
    let body = serde_json::json!({
        "module": "converge",
        "operation": "poisson",
        "params": {"levels": 6},
        "output": out,
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let o = kirlab(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("converge.json")).unwrap()).unwrap();
    assert_eq!(s["family"], "poisson");
    assert_eq!(std::fs::read_to_string(out.join("converge.csv")).unwrap().lines().count(), 7);
}

#[test]
fn reproduce_all_reports_and_catches_a_wrong_constant() {
    let o = kirlab(&["reproduce-all", "--only", "2,3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("2 of 2 checks passed"));

    let o = kirlab(&["reproduce-all", "--only", "1", "--inject-cs"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("[FAIL]  1 "));
}

#[test]
fn reproduce_all_with_empty_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = kirlab(&["reproduce-all", "--only", "6", "--config-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1 of 1 checks passed"));

    std::fs::write(dir.path().join("a.json"), r#"{"module": "dyadic", "operation": "rho", "params": {"x": [0.25], "y": 0.75}}"#).unwrap();
    std::fs::write(dir.path().join("b.json"), "not json").unwrap();
    let o = kirlab(&["reproduce-all", "--only", "6", "--config-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("[PASS] a.json"));
    assert!(s.contains("[FAIL] b.json: exit 2"));
}

#[test]
fn every_subcommand_runs() {
    let graph = r#"{"measure":{"nodes":[[0],[1],[2]],"weights":[1,1,1]},"coupling":{"entries":[[0,1,1],[1,0,1],[1,2,1],[2,1,1]]}}"#;
    let net = r#"{"delta":0.5,"j":1,"C":2,"points":[[0],[0.5],[1]],"masses":[0.5,0.5,0.5]}"#;
    let cases: Vec<Vec<&str>> = vec![
        vec!["graph", "--system", graph],
        vec!["graph", "--system", graph, "--op", "harmonic", "--func", "linear"],
        vec!["lattice", "--dim", "2", "--h", "0.5", "--window", "3"],
        vec!["lattice", "--op", "frac", "--alpha", "0.7", "--window", "3", "--func", "bump", "--radius", "64"],
        vec!["lattice", "--op", "constant", "--alpha", "1.2"],
        vec!["dyadic", "--op", "frac", "--j", "2", "--window", "7"],
        vec!["dyadic", "--op", "delta", "--s", "0.3", "--coef", r#"[{"j":1,"k":1,"coef":2}]"#, "--x", "0.6"],
        vec!["metric", "--net", net, "--op", "laplacian"],
        vec!["frac", "--s", "0.7", "--mode", "pv", "--x", "0.2"],
        vec!["hilbert", "--eps-start", "0.25", "--levels", "3"],
        vec!["coupling", "--kind", "indep", "--g", "gauss"],
        vec!["coupling", "--kind", "pos-order", "--F", "double", "--side", "y", "--func", "sq"],
        vec!["converge", "--family", "dichotomy", "--zeta", "cauchy", "--levels", "5"],
    ];
    for c in cases {
        let o = kirlab(&c);
        assert!(o.status.success(), "{c:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn graph_laplacian_of_linear_field_is_zero_inside() {
    let graph = r#"{"measure":{"nodes":[[0],[1],[2]],"weights":[1,1,1]},"coupling":{"entries":[[0,1,1],[1,0,1],[1,2,1],[2,1,1]]}}"#;
    let o = kirlab(&["graph", "--system", graph, "--op", "laplacian", "--func", "linear"]);
    let row = stdout(&o).lines().nth(2).unwrap().to_string();
    assert_eq!(row, "1,1,0");
}
