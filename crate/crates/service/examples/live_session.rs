//! Feeds observations into a stored session one at a time while a
//! subscriber prints the push stream.

use std::sync::Arc;

use qabd::casebook::ObservationDoc;
use qabd_service::SessionStore;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = Arc::new(SessionStore::in_memory());
    let mut case = qabd::fixture("bossetti").ok_or("fixture missing")?.case;
    let pending: Vec<ObservationDoc> = case.observations.drain(..).map(|o| ObservationDoc::from(&o)).collect();
    let id = store.create(case)?;

    let mut events = store.subscribe(&id, 0)?;
    let total = pending.len() as u64 + 1;
    let printer = tokio::spawn(async move {
        while let Some(e) = events.next().await {
            let weights: Vec<String> = e.state.weights().iter().map(|w| format!("{w:.3}")).collect();
            println!("rev {:>2} {:<22} a^2 = [{}]", e.revision, e.event, weights.join(" "));
            if e.revision + 1 == total {
                break;
            }
        }
    });

    for doc in pending {
        let store = store.clone();
        let id = id.clone();
        tokio::task::spawn_blocking(move || store.apply_observation(&id, doc)).await??;
    }
    printer.await?;

    let (outcome, _) = store.force_collapse(&id)?;
    println!(
        "forced: {} {:?} confidence {:.4}",
        outcome.kind, outcome.members, outcome.confidence
    );
    Ok(())
}
