//! Fold the forensic DNA fixture, then keep going past the first collapse.

use qabd::dynamics::{run, run_all};
use qabd::{fixture, HashingEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let case = fixture("bossetti").expect("bundled").case;
    let provider = HashingEmbedder::new(case.config.embed_dim);

    let stopped = run(&case, &provider)?;
    println!(
        "stopped after {} observation(s): {} {:?} (confidence {:.4})",
        stopped.traces.len(),
        stopped.outcome.kind,
        stopped.outcome.members,
        stopped.outcome.confidence
    );

    let full = run_all(&case, &provider)?;
    for t in &full.traces {
        let row: Vec<String> = t.post.weights().iter().map(|w| format!("{w:.4}")).collect();
        println!("{:>3} {}", t.observation_id, row.join(" "));
    }
    println!("final: {} {:?}", full.outcome.kind, full.outcome.members);
    Ok(())
}
