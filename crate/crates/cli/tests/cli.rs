use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_smdp-synth"));
    c.env_remove("SMDP_SYNTH_OUT");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("smdp-synth-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn check_passes() {
    let out = bin().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("[FAIL]"));
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 4);
}

#[test]
fn oracle_writes_only_the_oracle() {
    let dir = scratch("oracle");
    let out = bin().args(["oracle", "--out"]).arg(&dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("oracle.json")).unwrap()).unwrap();
    assert!(doc["max_reach"].is_array());
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 1);
}

#[test]
fn run_from_a_config_file_honors_the_environment() {
    let dir = scratch("run");
    let config = scratch("config.json");
    std::fs::write(
        &config,
        r#"{"name": "tiny", "repetitions": 1, "learner": {"patience": 50}, "transient": {"episodes": 200}, "sample_paths": 2, "path_horizon": 5}"#,
    )
    .unwrap();
    let out = bin().arg("run").arg(&config).args(["--seed", "7"]).env("SMDP_SYNTH_OUT", &dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["indk.csv", "progress.csv", "policy.json", "paths.jsonl", "summary.json", "oracle.json"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["name"], "tiny");
    assert_eq!(summary["seed"], 7);
    assert_eq!(std::fs::read_to_string(dir.join("paths.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let config = scratch("bad.json");
    std::fs::write(&config, r#"{"repetitons": 2}"#).unwrap();
    let out = bin().arg("run").arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("repetitons"));
}
