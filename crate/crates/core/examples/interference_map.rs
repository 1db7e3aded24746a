//! Export the Ludwig interference map as DOT and as JSON.

use qabd::dynamics::{build_interference, interference_dot, interference_map, run};
use qabd::{fixture, HashingEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut case = fixture("ludwig").expect("bundled").case;
    case.set_interference_override(qabd::model::InterferenceOverride { i: 4, j: 5, value: 0.7 });
    let provider = HashingEmbedder::new(case.config.embed_dim);

    let matrix = build_interference(&case.hypotheses, &case.config, &case.interference_overrides, &provider)?;
    let report = run(&case, &provider)?;
    println!("{}", interference_dot(&case.hypotheses, &matrix, Some(&report.state)));
    let map = interference_map(&case.hypotheses, &matrix, Some(&report.state));
    println!("{}", serde_json::to_string_pretty(&map)?);
    Ok(())
}
