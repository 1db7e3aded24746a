//! Elimination next to amplitude dynamics for every bundled fixture.

use qabd::{compare, list_fixtures, HashingEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for f in list_fixtures() {
        let provider = HashingEmbedder::new(f.case.config.embed_dim);
        let report = compare(&f.case, &provider)?;
        println!("{}", report.to_table());
    }
    Ok(())
}
