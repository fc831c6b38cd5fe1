mod common;

use std::path::Path;
use std::process::Command;

use common::{fixture, SALAD_GOAL};
use serde_json::Value;

fn procmem(store: &Path, args: &[&str]) -> (i32, Value, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_procmem"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), v, String::from_utf8(out.stderr).unwrap())
}

fn ok(store: &Path, args: &[&str]) -> Value {
    let (code, v, err) = procmem(store, args);
    assert_eq!(code, 0, "{args:?}: {err}");
    assert_eq!(v["version"], 1);
    let (code, _, err) = procmem(store, &["check"]);
    assert_eq!(code, 0, "check after {args:?}: {err}");
    v
}

#[test]
fn fruit_salad_session() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let corpus = fixture("fruit_salad.jsonl");
    let update = fixture("fruit_salad_update.jsonl");

    let v = ok(&store, &["ingest", corpus.to_str().unwrap()]);
    assert_eq!(v["ingested"], 9);
    let v = ok(&store, &["distill"]);
    assert_eq!(v["created"].as_array().unwrap().len(), 1);
    assert_eq!(v["created"][0]["goal"], SALAD_GOAL);

    let v = ok(&store, &["proc", "--goal", SALAD_GOAL]);
    assert_eq!(v["mode"], "symbolic");
    assert_eq!(v["store_reads"], 1);
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0]["steps"], serde_json::json!(["chop_fruit", "mix_fruit", "serve_salad"]));
    assert!(!v["evidence"].as_array().unwrap().is_empty());

    let v = ok(&store, &["update", update.to_str().unwrap()]);
    assert_eq!(v["reports"][0]["updated"], true);

    let v = ok(&store, &["proc", "--goal", SALAD_GOAL, "--where", "tool=neq:bowl"]);
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0]["steps"], serde_json::json!(["chop_fruit", "stir_fruit", "serve_salad"]));

    let v = ok(&store, &["proc", "--goal", SALAD_GOAL, "--no-logic"]);
    assert_eq!(v["mode"], "episodic-only");
    assert!(v["store_reads"].as_u64().unwrap() >= 3);

    let v = ok(&store, &["query", "--text", common::CONSTRAINT_QUESTION, "--where", "tool=neq:bowl", "-k", "3"]);
    assert_eq!(v["qtype"], "constraint");
    assert!(v["ranked"].as_array().unwrap().len() <= 3);
    assert_eq!(v["answer_context"]["procedure"]["blocked"], serde_json::json!(["mix_fruit"]));

    let v = ok(&store, &["character", "--person", "jack"]);
    assert_eq!(v["label"], "jack");
    assert_eq!(v["procedures"].as_array().unwrap().len(), 1);

    let v = ok(&store, &["expect", "--goal", SALAD_GOAL, "--from", "START"]);
    assert!(v["expected_steps"].as_f64().unwrap() > 0.0);

    let v = ok(&store, &["fuse", "--auto"]);
    assert!(v["fused"].as_array().unwrap().is_empty());

    let v = ok(&store, &["stats"]);
    assert_eq!(v["logic"], 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    assert_eq!(procmem(&store, &["frobnicate"]).0, 1);
    assert_eq!(procmem(&store, &["query", "--text", "x", "--type", "nonsense"]).0, 1);
    assert_eq!(procmem(&store, &["character", "--person", "nobody"]).0, 2);
    let (code, v, _) = procmem(&store, &["stats"]);
    assert_eq!(code, 0);
    assert_eq!(v["episodic"], 0);
    assert!(!store.exists());
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("procmem.conf");
    std::fs::write(&cfg, "alpha = 3.0\n").unwrap();
    let (code, _, err) = procmem(&dir.path().join("s"), &["--config", cfg.to_str().unwrap(), "stats"]);
    assert_eq!(code, 1, "{err}");
}
