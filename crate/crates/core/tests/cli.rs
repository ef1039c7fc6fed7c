use std::fs;
use std::process::Command;

fn shardsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shardsim"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SHARDSIM_")) {
        c.env_remove(k);
    }
    c
}

#[test]
fn validate_and_dump_config() {
    let out = shardsim().arg("validate").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");

    let out = shardsim().args(["dump-config", "--nodes", "24", "--shards", "3"]).output().unwrap();
    assert!(out.status.success());
    let cfg = shardsim::SimConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((cfg.network.n_total, cfg.network.d_shards), (24, 3));
}

#[test]
fn invalid_config_fails_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[network]\nn_min = 2\n").unwrap();
    let out = shardsim().arg("--config").arg(&path).arg("validate").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_min"));
}

#[test]
fn run_writes_index_and_rerun_matches() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let out = shardsim()
        .args(["run", "--strategy", "random,trust", "--dishonest", "1-2", "--seeds", "0,3", "--episodes", "5", "--jobs", "1"])
        .arg("--out")
        .arg(&first)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(first.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["entries"].as_array().unwrap().len(), 8);

    let second = dir.path().join("b");
    let out = shardsim()
        .args(["run", "--only", "trust_h2_s3"])
        .arg("--rerun")
        .arg(first.join("index.json"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(first.join("trust_h2_s3.csv")).unwrap(), fs::read(second.join("trust_h2_s3.csv")).unwrap());
    assert!(!second.join("trust_h1_s0.csv").exists());
}

#[test]
fn env_overrides_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = shardsim()
        .arg("run")
        .env("SHARDSIM_STRATEGY", "community")
        .env("SHARDSIM_EPISODES", "2")
        .env("SHARDSIM_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("community_h4_s0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn oracle_prints_best_allocation() {
    let out = shardsim().args(["oracle", "--nodes", "8", "--dishonest", "1", "--seed", "2"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["assignment"].as_array().unwrap().len(), 8);
    assert!(v["reward"]["total"].is_number());
}

#[test]
fn unknown_strategy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = shardsim().args(["run", "--strategy", "greedy"]).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}
