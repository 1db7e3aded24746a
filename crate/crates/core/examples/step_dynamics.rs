//! Drive a three-hypothesis state with hand-built evidence and print the trace.

use qabd::dynamics::{coherence, step, EvidenceVector};
use qabd::model::{AbductiveState, InterferenceMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let interference =
        InterferenceMatrix::from_rows(&[vec![0.0, 0.4, -0.6], vec![0.4, 0.0, -0.2], vec![-0.6, -0.2, 0.0]])?;
    let mut state = AbductiveState::uniform(3);
    let evidence = [[0.9, 0.5, -0.3], [0.2, 0.8, -1.0], [1.0, -0.1, 0.0]];

    for (k, e) in evidence.iter().enumerate() {
        let (next, trace) = step(
            &state,
            &EvidenceVector::new(e.to_vec()),
            &interference,
            0.1,
            &format!("O{}", k + 1),
        )?;
        println!(
            "{}: pre {:?} -> post {:?} (coherence {:.4})",
            trace.observation_id,
            trace.pre_norm.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            next.amplitudes().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            coherence(&next)
        );
        state = next;
    }
    Ok(())
}
