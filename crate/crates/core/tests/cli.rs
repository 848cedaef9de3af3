use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coupled-risk"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn run_validate(config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coupled-risk")).arg("validate").arg("--config").arg(config).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn validate_shipped_configs() {
    for name in ["cfg_a", "cfg_b", "ruin_oracle"] {
        let out = run_validate(&root().join(format!("configs/{name}.json")));
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "{ not json",
        r#"{"company1":{"drift":2,"rate":1,"jumps":{"type":"exponential","rate":1}},
            "company2":{"drift":3,"rate":2,"jumps":{"type":"exponential","rate":1}},
            "r1":1,"r2":1,"bogus":3}"#,
        r#"{"company1":{"drift":0.5,"rate":1,"jumps":{"type":"exponential","rate":1}},
            "company2":{"drift":3,"rate":2,"jumps":{"type":"exponential","rate":1}},
            "r1":"inf","r2":1}"#,
        r#"{"company1":{"drift":2,"rate":1,"jumps":{"type":"exponential","rate":1}},
            "company2":{"drift":3,"rate":2,"jumps":{"type":"exponential","rate":1}},
            "r1":1,"r2":1,"rho1":0.5}"#,
    ];
    for body in cases {
        let out = run_validate(&write_config(dir.path(), body));
        assert_eq!(out.status.code(), Some(2), "{body}");
    }
}

#[test]
fn degenerate_queue_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "thm2_queue"], &root().join("configs/degenerate_queue.json"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--what", "F1"], &root().join("configs/cfg_a.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("analyze-F1.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert!(csv.lines().count() > 1);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("analyze-F1.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
}

#[test]
fn simulate_risk_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(root().join("configs/cfg_a.json")).unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&body).unwrap();
    cfg["simulation"] = serde_json::json!({ "replicas": 500 });
    let config = write_config(dir.path(), &cfg.to_string());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["simulate-risk", "--jobs", "1"], &config, &a).status.code(), Some(0));
    assert_eq!(run(&["simulate-risk", "--jobs", "4"], &config, &b).status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("simulate-risk.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a).iter().filter(|&&c| c == b'\n').count(), 501);
}

#[test]
fn verify_subset_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "wh_identity,kernel_curve"], &root().join("configs/cfg_a.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("verify-report.json").exists());
}
