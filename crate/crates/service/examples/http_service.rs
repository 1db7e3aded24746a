//! Starts the HTTP service on an ephemeral port and drives one case through
//! it with plain JSON requests.

use std::sync::Arc;

use qabd_service::SessionStore;
use serde_json::Value;

fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<&str>) -> Result<Value, Box<dyn std::error::Error>> {
    let mut response = match (method, body) {
        ("GET", _) => agent.get(url).call()?,
        ("PUT", Some(b)) => agent.put(url).content_type("application/json").send(b)?,
        (_, b) => agent.post(url).content_type("application/json").send(b.unwrap_or(""))?,
    };
    let status = response.status();
    let value: Value = serde_json::from_str(&response.body_mut().read_to_string()?)?;
    println!("{method} {url} -> {status}");
    Ok(value)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    runtime.spawn(qabd_service::http::serve(listener, Arc::new(SessionStore::in_memory())));

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let case = qabd::serialize_case(&qabd::fixture("drift").ok_or("fixture missing")?.case);
    let created = call(&agent, "POST", &format!("{base}/cases"), Some(&case))?;
    let id = created["id"].as_str().unwrap_or_default().to_string();

    let reply = call(
        &agent,
        "POST",
        &format!("{base}/cases/{id}/observations"),
        Some(r#"{"id": "O9", "statement": "magnetic striping is symmetric about the ridges"}"#),
    )?;
    println!("  revision {} outcome {}", reply["revision"], reply["outcome"]["kind"]);

    call(
        &agent,
        "PUT",
        &format!("{base}/cases/{id}/interference"),
        Some(r#"{"i": 1, "j": 2, "value": -0.8}"#),
    )?;
    let state = call(&agent, "GET", &format!("{base}/cases/{id}/state"), None)?;
    println!("  amplitudes {}", state["amplitudes"]);

    let missing = call(&agent, "GET", &format!("{base}/cases/case-404/state"), None)?;
    println!("  {}: {}", missing["code"], missing["message"]);
    Ok(())
}
