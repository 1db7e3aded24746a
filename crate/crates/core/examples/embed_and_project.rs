//! Hash two texts into the shared space and project one onto the other.

use qabd::dynamics::project;
use qabd::embed::{cosine, tokenize, EmbeddingProvider, HashingEmbedder};
use qabd::model::{Hypothesis, Observation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let provider = HashingEmbedder::new(256);
    let h = Hypothesis::new("H1", "Drift", "The continents drift across the mantle");
    let o = Observation::new("O1", "Matching fossils on continents now far apart", 1.0, 1);

    println!("tokens: {:?}", tokenize(&o.statement));
    let a = provider.embed(&h.statement)?;
    let b = provider.embed(&o.statement)?;
    println!("cosine       = {:.4}", cosine(&a, &b)?);
    println!("project      = {:.4}", project(&h, &o, &provider)?);

    let marked = o.clone().with_override("H1", 1.0);
    println!("with a check = {:.4}", project(&h, &marked, &provider)?);
    Ok(())
}
