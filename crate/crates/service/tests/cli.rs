mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qabd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qabd"))
        .args(args)
        .env_remove("QABD_SERVICE_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CANONICAL: [&str; 6] = [
    "state.json",
    "trace.jsonl",
    "outcome.json",
    "events.jsonl",
    "map.dot",
    "map.json",
];

#[test]
fn run_bossetti_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = qabd(&[
        "run",
        "--fixture",
        "bossetti",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in CANONICAL.iter().chain(&["run.meta.json"]) {
        assert!(out.join(name).exists(), "{name}");
    }
    let outcome = read_json(&out.join("outcome.json"));
    // reference oracle: the third observation already makes H2 dominant
    assert_eq!(outcome["kind"], "dominant");
    assert_eq!(outcome["members"], serde_json::json!(["H2"]));
    assert_eq!(
        std::fs::read_to_string(out.join("trace.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, outcome);
}

#[test]
fn run_medical_defers() {
    let dir = tempfile::tempdir().unwrap();
    let o = qabd(&["run", "--fixture", "medical", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let outcome = read_json(&dir.path().join("outcome.json"));
    assert_eq!(outcome["kind"], "deferred");
    assert_eq!(outcome["members"], serde_json::json!(["H1", "H2"]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("deferred {H1, H2}"));
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = qabd(&[
            "run",
            "--fixture",
            "ludwig",
            "--mode",
            "max",
            "--eta",
            "0.2",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    for name in CANONICAL {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn exit_codes() {
    assert_eq!(code(&qabd(&["run", "--case", "missing.json"])), 3);
    assert_eq!(
        code(&qabd(&["run", "--fixture", "ludwig", "--theta-collapse", "1.5"])),
        1
    );
    assert_eq!(code(&qabd(&["frobnicate"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("embeddings-only.json");
    std::fs::write(
        &path,
        r#"{"schema":1,"name":"free","hypotheses":[{"id":"H1","label":"a","statement":"tidal origin"},
        {"id":"H2","label":"b","statement":"volcanic origin"}],
        "observations":[{"id":"O1","statement":"ash layers in the core"}]}"#,
    )
    .unwrap();
    let o = qabd(&["compare", "--case", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a qualitative mark"));

    std::fs::write(&path, "{\"schema\": 1,").unwrap();
    assert_eq!(code(&qabd(&["run", "--case", path.to_str().unwrap()])), 2);
}

#[test]
fn compare_reports() {
    let o = qabd(&["compare", "--fixture", "bossetti", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["flags"].as_array().unwrap().contains(&"deadlock".into()));
    let o = qabd(&["compare", "--fixture", "ludwig", "--format", "json"]);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["classical"]["survivors"], serde_json::json!(["H5"]));
}

#[test]
fn replay_of_run_output() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&qabd(&[
            "run",
            "--fixture",
            "ludwig",
            "--out",
            dir.path().to_str().unwrap()
        ])),
        0
    );
    let log = dir.path().join("events.jsonl");
    let o = qabd(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // nudge one amplitude of revision 3 by a single ulp
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut record: Value = serde_json::from_str(&lines[3]).unwrap();
    let a = record["amplitudes"][1].as_f64().unwrap();
    record["amplitudes"][1] = f64::from_bits(a.to_bits() + 1).into();
    lines[3] = serde_json::to_string(&record).unwrap();
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let o = qabd(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("first divergent revision 3"));
}

#[test]
fn replay_follows_fork_lineage() {
    let dir = tempfile::tempdir().unwrap();
    let addr = common::spawn_with_logs(dir.path());
    let id = common::post(
        addr,
        "/cases",
        &qabd::serialize_case(&qabd::fixture("bossetti").unwrap().case),
    )
    .json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    common::put(
        addr,
        &format!("/cases/{id}/interference"),
        r#"{"i":2,"j":5,"value":-0.7}"#,
    );
    let fork = common::post(
        addr,
        &format!("/cases/{id}/fork"),
        r#"{"drop_observation_ids":["O7"],"extra_overrides":[{"i":1,"j":6,"value":0.3}]}"#,
    )
    .json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let log = dir.path().join(format!("{fork}.jsonl"));
    let o = qabd(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("lineage {id}")));
}

#[test]
fn remote_mode_matches_local() {
    let addr = common::spawn(qabd_service::SessionStore::in_memory());
    let dir = tempfile::tempdir().unwrap();
    let local = dir.path().join("local");
    let remote = dir.path().join("remote");
    assert_eq!(
        code(&qabd(&["run", "--fixture", "drift", "--out", local.to_str().unwrap()])),
        0
    );
    let o = Command::new(env!("CARGO_BIN_EXE_qabd"))
        .args(["run", "--fixture", "drift", "--out", remote.to_str().unwrap()])
        .env("QABD_SERVICE_URL", format!("http://{addr}"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["state.json", "trace.jsonl", "outcome.json", "map.dot", "map.json"] {
        assert_eq!(
            std::fs::read(local.join(name)).unwrap(),
            std::fs::read(remote.join(name)).unwrap(),
            "{name}"
        );
    }
    let o = Command::new(env!("CARGO_BIN_EXE_qabd"))
        .args(["compare", "--fixture", "ludwig", "--format", "json"])
        .env("QABD_SERVICE_URL", format!("http://{addr}"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["classical"]["survivors"], serde_json::json!(["H5"]));
}
