#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use qabd_service::SessionStore;

/// Serves `store` on an ephemeral port from a background runtime.
pub fn spawn(store: SessionStore) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            qabd_service::http::serve(listener, Arc::new(store)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

pub fn spawn_with_logs(dir: &Path) -> SocketAddr {
    spawn(SessionStore::open(dir).unwrap())
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .new_agent()
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

fn finish(r: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
    let mut r = r.unwrap();
    Reply {
        status: r.status().as_u16(),
        body: r.body_mut().read_to_string().unwrap(),
    }
}

pub fn get(addr: SocketAddr, path: &str) -> Reply {
    finish(agent().get(&format!("http://{addr}{path}")).call())
}

pub fn post(addr: SocketAddr, path: &str, body: &str) -> Reply {
    finish(
        agent()
            .post(&format!("http://{addr}{path}"))
            .header("content-type", "application/json")
            .send(body),
    )
}

pub fn put(addr: SocketAddr, path: &str, body: &str) -> Reply {
    finish(
        agent()
            .put(&format!("http://{addr}{path}"))
            .header("content-type", "application/json")
            .send(body),
    )
}

/// A fixture's case file with its observations removed, plus the
/// observations as request bodies.
pub fn split_fixture(id: &str) -> (String, Vec<String>) {
    let mut case = qabd::fixture(id).unwrap().case;
    let observations = std::mem::take(&mut case.observations);
    let bodies = observations
        .iter()
        .map(|o| serde_json::to_string(&qabd::casebook::ObservationDoc::from(o)).unwrap())
        .collect();
    (qabd::serialize_case(&case), bodies)
}

const WORDS: [&str; 16] = [
    "fever", "rash", "joint", "pain", "travel", "mosquito", "lab", "platelet", "cough", "fatigue", "liver", "serology",
    "onset", "acute", "chronic", "exposure",
];

/// Drives a fresh session through `events` seeded random mutations:
/// observations (embedded or with explicit marks), interference
/// overrides and forced collapses. Steps the engine refuses are redrawn.
pub fn random_session(seed: u64, events: usize) -> qabd_service::Session {
    use qabd::casebook::{ObservationDoc, OverrideValue};
    use rand::prelude::*;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut case = qabd::fixture("medical").unwrap().case;
    case.observations.clear();
    let n = case.hypotheses.len();
    let ids: Vec<String> = case.hypotheses.iter().map(|h| h.id.clone()).collect();
    let provider = qabd_service::session::default_provider(&case);
    let mut session = qabd_service::Session::create("case-1", case, provider).unwrap();
    let mut obs = 0;
    while session.revision() < events as u64 {
        let roll: f64 = rng.random();
        if roll < 0.6 {
            obs += 1;
            let statement: Vec<&str> = (0..rng.random_range(2..6))
                .map(|_| *WORDS.choose(&mut rng).unwrap())
                .collect();
            let mut overrides = std::collections::BTreeMap::new();
            if rng.random_bool(0.5) {
                for id in &ids {
                    if rng.random_bool(0.7) {
                        overrides.insert(id.clone(), OverrideValue::Number(rng.random_range(-1.0..=1.0)));
                    }
                }
            }
            let doc = ObservationDoc {
                id: format!("R{obs}"),
                statement: statement.join(" "),
                weight: rng.random_range(0.1..=1.0),
                overrides,
            };
            let _ = session.apply_observation(doc);
        } else if roll < 0.85 {
            let i = rng.random_range(1..=n);
            let mut j = rng.random_range(1..=n);
            while j == i {
                j = rng.random_range(1..=n);
            }
            session
                .override_interference(i, j, rng.random_range(-1.0..=1.0))
                .unwrap();
        } else {
            session.force_collapse().unwrap();
        }
    }
    session
}
