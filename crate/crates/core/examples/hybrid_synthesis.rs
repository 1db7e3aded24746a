//! Two positively coupled hypotheses that end in a hybrid synthesis.

use qabd::dynamics::run;
use qabd::model::{new_case, DynamicsConfig, Hypothesis, InterferenceOverride, Observation};
use qabd::HashingEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hypotheses = vec![
        Hypothesis::new("H1", "Wave", "Light propagates as a wave"),
        Hypothesis::new("H2", "Particle", "Light arrives in discrete particles"),
        Hypothesis::new("H3", "Ether drag", "A dragged ether carries the light"),
    ];
    let mut case = new_case("light", hypotheses, DynamicsConfig::default())?;
    case.set_interference_override(InterferenceOverride { i: 1, j: 2, value: 0.3 });
    case.set_interference_override(InterferenceOverride {
        i: 1,
        j: 3,
        value: -0.4,
    });
    case.set_interference_override(InterferenceOverride {
        i: 2,
        j: 3,
        value: -0.4,
    });
    let evidence = [
        ("Interference fringes", 1.0, 0.2),
        ("Photoelectric threshold", 0.2, 1.0),
        ("Null drift result", 0.5, 0.5),
    ];
    for (k, (text, wave, particle)) in evidence.into_iter().enumerate() {
        case.observations.push(
            Observation::new(format!("O{}", k + 1), text, 1.0, k as u64 + 1)
                .with_override("H1", wave)
                .with_override("H2", particle)
                .with_override("H3", -1.0),
        );
    }

    let provider = HashingEmbedder::new(case.config.embed_dim);
    let report = run(&case, &provider)?;
    println!("{} {:?}", report.outcome.kind, report.outcome.members);
    if let Some(h) = &report.outcome.synthesized {
        println!("{}: {}", h.id, h.statement);
    }
    Ok(())
}
