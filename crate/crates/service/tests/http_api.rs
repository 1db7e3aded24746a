mod common;

use std::io::{BufRead, BufReader};

use common::{get, post, put, spawn, split_fixture};
use qabd_service::{PushEvent, SessionStore};
use serde_json::Value;

fn create(addr: std::net::SocketAddr, body: &str) -> String {
    let r = post(addr, "/cases", body);
    assert_eq!(r.status, 201, "{}", r.body);
    r.json()["id"].as_str().unwrap().to_string()
}

#[test]
fn observation_flow_and_state() {
    let addr = spawn(SessionStore::in_memory());
    let (case, observations) = split_fixture("bossetti");
    let id = create(addr, &case);

    let state = get(addr, &format!("/cases/{id}/state")).json();
    assert_eq!(state["revision"], 0);
    assert_eq!(state["outcome"]["kind"], "deferred");

    let r = post(addr, &format!("/cases/{id}/observations"), &observations[0]);
    assert_eq!(r.status, 200, "{}", r.body);
    let v = r.json();
    assert_eq!(v["revision"], 1);
    let amps: Vec<f64> = serde_json::from_value(v["amplitudes"].clone()).unwrap();
    assert!(amps.windows(2).any(|w| w[0] != w[1]));
    assert!((amps.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-9);

    for o in &observations[1..] {
        assert_eq!(post(addr, &format!("/cases/{id}/observations"), o).status, 200);
    }
    let collapse = post(addr, &format!("/cases/{id}/collapse"), "");
    let outcome = &collapse.json()["outcome"];
    assert_eq!(outcome["kind"], "dominant");
    assert_eq!(outcome["forced"], true);
    // reference oracle: after all seven observations H2 carries the most weight
    assert_eq!(outcome["members"][0], "H2");
    let after = get(addr, &format!("/cases/{id}/state")).json();
    assert_eq!(after["revision"], 8);
    assert_eq!(
        after["amplitudes"],
        get(addr, &format!("/cases/{id}/state")).json()["amplitudes"]
    );
}

#[test]
fn error_mapping() {
    let addr = spawn(SessionStore::in_memory());
    let (case, observations) = split_fixture("drift");
    let id = create(addr, &case);

    let unknown = post(addr, "/cases/case-99/observations", &observations[0]);
    assert_eq!(unknown.status, 404);
    assert_eq!(unknown.json()["code"], "unknown-case");

    assert_eq!(post(addr, "/cases", "{nope").json()["code"], "parse");
    assert_eq!(post(addr, "/cases", "{nope").status, 400);
    let dup = case.replace("\"H2\"", "\"H1\"");
    assert_eq!(post(addr, "/cases", &dup).json()["code"], "validation-failed");

    let diagonal = put(
        addr,
        &format!("/cases/{id}/interference"),
        r#"{"i":1,"j":1,"value":0.3}"#,
    );
    assert_eq!(
        (diagonal.status, diagonal.json()["code"].as_str().unwrap()),
        (400, "diagonal-override")
    );
    let bad = put(
        addr,
        &format!("/cases/{id}/interference"),
        r#"{"i":1,"j":2,"value":1.3}"#,
    );
    assert_eq!(bad.json()["code"], "bad-value");

    let heavy = observations[0].replace("\"weight\":1.0", "\"weight\":2.0");
    assert_eq!(
        post(addr, &format!("/cases/{id}/observations"), &heavy).json()["code"],
        "validation-failed"
    );

    assert_eq!(get(addr, &format!("/cases/{id}/map?format=svg")).status, 400);
    assert_eq!(get(addr, &format!("/cases/{id}/state")).json()["revision"], 0);
}

#[test]
fn degenerate_step_is_a_conflict() {
    let addr = spawn(SessionStore::in_memory());
    let case = r#"{"schema":1,"name":"cancel","config":{"eta":1.0,"aggregation":"sum","collapse_threshold":0.6,
        "hybrid_ratio":0.8,"interference_offset":0.5,"embed_dim":256},
        "hypotheses":[{"id":"H1","label":"a","statement":"alpha"},{"id":"H2","label":"b","statement":"beta"}],
        "interference_overrides":[{"i":1,"j":2,"value":0.0}]}"#;
    let id = create(addr, case);
    let body = r#"{"id":"O1","statement":"cancel","overrides":{"H1":-0.7071067811865476,"H2":-0.7071067811865476}}"#;
    let r = post(addr, &format!("/cases/{id}/observations"), body);
    assert_eq!(r.status, 409);
    assert_eq!(r.json()["code"], "degenerate-state");
    assert_eq!(get(addr, &format!("/cases/{id}/log")).body.lines().count(), 1);
}

#[test]
fn interference_map_and_compare() {
    let addr = spawn(SessionStore::in_memory());
    let id = create(addr, &qabd::serialize_case(&qabd::fixture("ludwig").unwrap().case));
    let r = put(
        addr,
        &format!("/cases/{id}/interference"),
        r#"{"i":1,"j":2,"value":-0.9}"#,
    );
    assert_eq!(r.json()["revision"], 8);

    let map = get(addr, &format!("/cases/{id}/map?format=json")).json();
    let edge = map["edges"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["i"] == 1 && e["j"] == 2)
        .unwrap();
    assert_eq!(edge["value"], -0.9);
    assert_eq!(edge["provenance"], "expert-override");
    let dot = get(addr, &format!("/cases/{id}/map?format=dot")).body;
    assert!(dot.contains("\"H1\" -- \"H2\" [label=\"-0.900\", style=dashed"));

    let report = get(addr, &format!("/cases/{id}/compare")).json();
    assert_eq!(report["classical"]["survivors"], serde_json::json!(["H5"]));

    let free = r#"{"schema":1,"name":"free","hypotheses":[{"id":"H1","label":"a","statement":"tidal origin"},
        {"id":"H2","label":"b","statement":"volcanic origin"}],
        "observations":[{"id":"O1","statement":"ash layers in the core"}]}"#;
    let free_id = create(addr, free);
    let r = get(addr, &format!("/cases/{free_id}/compare"));
    assert_eq!(
        (r.status, r.json()["code"].as_str().unwrap()),
        (409, "non-qualitative-matrix")
    );
}

#[test]
fn fork_endpoint() {
    let addr = spawn(SessionStore::in_memory());
    let id = create(addr, &qabd::serialize_case(&qabd::fixture("bossetti").unwrap().case));
    let r = post(addr, &format!("/cases/{id}/fork"), r#"{"drop_observation_ids":["O7"]}"#);
    assert_eq!(r.status, 201);
    let fork = r.json()["id"].as_str().unwrap().to_string();
    assert_ne!(fork, id);
    let weight = |case: &str| -> f64 {
        let a = get(addr, &format!("/cases/{case}/state")).json()["amplitudes"][0]
            .as_f64()
            .unwrap();
        a * a
    };
    assert!(weight(&fork) < weight(&id));
    let missing = post(
        addr,
        &format!("/cases/{id}/fork"),
        r#"{"drop_observation_ids":["O42"]}"#,
    );
    assert_eq!(missing.json()["code"], "unknown-observation");
    let list: Value = get(addr, "/cases").json();
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[test]
fn push_stream_replays_history_then_follows_live() {
    let addr = spawn(SessionStore::in_memory());
    let (case, observations) = split_fixture("bossetti");
    let id = create(addr, &case);
    post(addr, &format!("/cases/{id}/observations"), &observations[0]);

    let response = common::agent()
        .get(&format!("http://{addr}/cases/{id}/events"))
        .call()
        .unwrap();
    let mut lines = BufReader::new(response.into_body().into_reader()).lines();
    let writer = std::thread::spawn(move || {
        for o in &observations[1..] {
            assert_eq!(post(addr, &format!("/cases/{id}/observations"), o).status, 200);
        }
    });
    let mut seen: Vec<PushEvent> = Vec::new();
    while seen.len() < 8 {
        seen.push(serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap());
    }
    writer.join().unwrap();
    assert_eq!(
        seen.iter().map(|e| e.revision).collect::<Vec<_>>(),
        (0..=7).collect::<Vec<_>>()
    );
    assert_eq!(seen[0].event, "created");
    assert!(seen[1..]
        .iter()
        .all(|e| e.event == "observation" && e.outcome.is_some()));
    assert_eq!(seen[7].state.step(), 7);
}
