//! List bundled fixtures and print one in canonical form.

use qabd::casebook::{list_fixtures, serialize_case};

fn main() {
    for f in list_fixtures() {
        println!(
            "{:<9} {} hypotheses, {} observations  {}",
            f.id,
            f.case.hypotheses.len(),
            f.case.observations.len(),
            f.description
        );
    }
    let name = std::env::args().nth(1).unwrap_or_else(|| "medical".into());
    if let Some(f) = qabd::fixture(&name) {
        print!("{}", serialize_case(&f.case));
    }
}
