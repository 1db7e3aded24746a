//! Replace hashed embeddings with precomputed vectors from a key/vector file.

use qabd::dynamics::project;
use qabd::embed::VectorStore;
use qabd::model::{Hypothesis, Observation};

const VECTORS: &str = "\
# key<TAB>comma-separated components
toxin ingestion\t0.9,0.1,0.0
autoimmune response\t0.1,0.9,0.2
descending paralysis\t0.8,0.3,0.1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = VectorStore::parse(VECTORS)?;
    let mut hypotheses = vec![
        Hypothesis::new("H1", "Botulism", "toxin ingestion"),
        Hypothesis::new("H2", "GBS", "autoimmune response"),
    ];
    store.attach(&mut hypotheses);
    let o = Observation::new("O1", "descending paralysis", 1.0, 1);
    for h in &hypotheses {
        println!("{} x {} = {:.4}", h.id, o.id, project(h, &o, &store)?);
    }
    Ok(())
}
