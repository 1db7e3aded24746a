use proptest::prelude::*;
use qabd::casebook::load_case;
use qabd::dynamics::{coherence, run_all, step, try_collapse, EvidenceVector};
use qabd::model::{AbductiveState, DynamicsConfig, Hypothesis, InterferenceMatrix};
use qabd::HashingEmbedder;

fn unit_state(raw: Vec<f64>) -> Option<AbductiveState> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-3 {
        return None;
    }
    AbductiveState::new(raw.iter().map(|v| v / norm).collect(), 0).ok()
}

fn symmetric(n: usize, upper: &[f64]) -> InterferenceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    let mut it = upper.iter();
    for (i, j) in (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))) {
        let v = *it.next().unwrap();
        rows[i][j] = v;
        rows[j][i] = v;
    }
    InterferenceMatrix::from_rows(&rows).unwrap()
}

prop_compose! {
    fn step_inputs()(n in 2usize..=12)(
        raw in prop::collection::vec(-1.0f64..1.0, n),
        evidence in prop::collection::vec(-1.0f64..=1.0, n),
        upper in prop::collection::vec(-1.0f64..=1.0, n * (n - 1) / 2),
        eta in 0.01f64..=1.0,
        n in Just(n),
    ) -> (Vec<f64>, Vec<f64>, InterferenceMatrix, f64) {
        (raw, evidence, symmetric(n, &upper), eta)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn step_preserves_normalization((raw, evidence, interference, eta) in step_inputs()) {
        let Some(state) = unit_state(raw) else { return Ok(()) };
        if let Ok((next, trace)) = step(&state, &EvidenceVector::new(evidence), &interference, eta, "O") {
            prop_assert!(next.norm_error() < 1e-9);
            prop_assert_eq!(trace.post, next);
        }
    }

    #[test]
    fn relabeling_permutes_the_result_exactly(
        (raw, evidence, interference, eta) in step_inputs(),
        seed in any::<u64>(),
    ) {
        let Some(state) = unit_state(raw) else { return Ok(()) };
        let n = state.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permute = |v: &[f64]| perm.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let base = step(&state, &EvidenceVector::new(evidence.clone()), &interference, eta, "O");
        let moved = step(
            &AbductiveState::new(permute(state.amplitudes()), 0).unwrap(),
            &EvidenceVector::new(permute(&evidence)),
            &interference.permuted(&perm),
            eta,
            "O",
        );
        match (base, moved) {
            (Ok((a, _)), Ok((b, _))) => prop_assert_eq!(permute(a.amplitudes()), b.amplitudes().to_vec()),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "one side failed: {:?} / {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn zero_dynamics_is_a_bit_exact_fixed_point(raw in prop::collection::vec(-1.0f64..1.0, 2..10), eta in 0.01f64..5.0) {
        let Some(state) = unit_state(raw) else { return Ok(()) };
        let n = state.len();
        let (next, _) = step(&state, &EvidenceVector::zeros(n), &InterferenceMatrix::zeros(n), eta, "O").unwrap();
        prop_assert_eq!(next.amplitudes(), state.amplitudes());
    }

    #[test]
    fn lone_positive_evidence_raises_its_weight(
        raw in prop::collection::vec(0.05f64..1.0, 2..10),
        pick in any::<prop::sample::Index>(),
        e in 0.01f64..=1.0,
        eta in 0.01f64..=1.0,
    ) {
        let Some(state) = unit_state(raw) else { return Ok(()) };
        let n = state.len();
        let i = pick.index(n);
        let mut evidence = vec![0.0; n];
        evidence[i] = e;
        let (next, _) = step(&state, &EvidenceVector::new(evidence), &InterferenceMatrix::zeros(n), eta, "O").unwrap();
        prop_assert!(next.weights()[i] > state.weights()[i]);
    }

    #[test]
    fn collapse_is_pure(raw in prop::collection::vec(-1.0f64..1.0, 2..8), upper in prop::collection::vec(-1.0f64..=1.0, 28)) {
        let Some(state) = unit_state(raw) else { return Ok(()) };
        let n = state.len();
        let interference = symmetric(n, &upper[..n * (n - 1) / 2]);
        let hyps: Vec<Hypothesis> = (1..=n).map(|i| Hypothesis::new(format!("H{i}"), "h", "s")).collect();
        let cfg = DynamicsConfig::default();
        prop_assert_eq!(
            try_collapse(&state, &interference, &cfg, &hyps),
            try_collapse(&state, &interference, &cfg, &hyps)
        );
        prop_assert!(coherence(&state) > 0.0 && coherence(&state) <= 1.0 + 1e-12);
    }
}

#[test]
fn observation_order_matters() {
    let source = include_str!("data/order_witness.json");
    let forward = load_case(source).unwrap();
    let mut reversed = forward.clone();
    reversed.observations.reverse();
    for (k, o) in reversed.observations.iter_mut().enumerate() {
        o.sequence = k as u64 + 1;
    }
    let p = HashingEmbedder::default();
    let a = run_all(&forward, &p).unwrap().state;
    let b = run_all(&reversed, &p).unwrap().state;
    assert_ne!(a.amplitudes(), b.amplitudes());
    // reference oracle, both orders
    let expect_ab = [0.7814331182786115, 0.6239890076414533];
    let expect_ba = [0.7848779686465671, 0.6196503645873523];
    for k in 0..2 {
        assert!((a.amplitudes()[k] - expect_ab[k]).abs() < 1e-12);
        assert!((b.amplitudes()[k] - expect_ba[k]).abs() < 1e-12);
    }
}
