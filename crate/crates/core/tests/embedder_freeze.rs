use proptest::prelude::*;
use qabd::embed::{cosine, token_slot, EmbeddingProvider, HashingEmbedder};

/// Second FNV-1a 64 implementation, kept separate from the library: it works
/// on 128-bit intermediates and masks, instead of wrapping u64 arithmetic.
fn reference_fnv1a(text: &str) -> u64 {
    let mut hash: u128 = 14_695_981_039_346_656_037;
    for byte in text.bytes() {
        hash ^= byte as u128;
        hash = (hash * 1_099_511_628_211) & 0xffff_ffff_ffff_ffff;
    }
    hash as u64
}

fn reference_slot(text: &str, dim: u64) -> (usize, f64) {
    let h = reference_fnv1a(text);
    ((h % dim) as usize, if h & (1 << 63) != 0 { -1.0 } else { 1.0 })
}

// (token, coordinate mod 256, sign), computed once from the FNV-1a definition
const FROZEN: [(&str, usize, f64); 20] = [
    ("dna", 146, -1.0),
    ("alpha", 43, -1.0),
    ("beta", 167, 1.0),
    ("gamma", 106, 1.0),
    ("nuclear", 97, -1.0),
    ("mitochondrial", 36, 1.0),
    ("haplotype", 75, 1.0),
    ("suicide", 175, 1.0),
    ("murder", 90, 1.0),
    ("struggle", 18, -1.0),
    ("seizure", 136, 1.0),
    ("drowning", 203, 1.0),
    ("botulism", 162, -1.0),
    ("paralysis", 85, -1.0),
    ("continents", 224, 1.0),
    ("drift", 4, 1.0),
    ("fixism", 199, -1.0),
    ("court", 168, -1.0),
    ("ruling", 180, -1.0),
    ("h1", 210, 1.0),
];

#[test]
fn frozen_pairs_match_both_implementations() {
    for (token, index, sign) in FROZEN {
        assert_eq!(token_slot(token, 256), (index, sign), "library: {token}");
        assert_eq!(reference_slot(token, 256), (index, sign), "reference: {token}");
    }
}

#[test]
fn single_token_embedding_is_its_slot() {
    let provider = HashingEmbedder::default();
    for (token, index, sign) in FROZEN {
        let v = provider.embed(token).unwrap();
        for (k, &x) in v.values().iter().enumerate() {
            assert_eq!(x, if k == index { sign } else { 0.0 }, "{token}[{k}]");
        }
    }
}

#[test]
fn frozen_tokens_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for (_, index, _) in FROZEN {
        assert!(seen.insert(index));
    }
    let provider = HashingEmbedder::default();
    let a = provider.embed("alpha").unwrap();
    let b = provider.embed("beta").unwrap();
    assert_eq!(cosine(&a, &b).unwrap(), 0.0);
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z0-9]{1,10}", 1..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn slots_agree_on_random_tokens(token in "[a-z0-9]{1,16}", dim in 1u64..1024) {
        prop_assert_eq!(token_slot(&token, dim as usize), reference_slot(&token, dim));
    }

    #[test]
    fn embeddings_have_unit_norm(text in words()) {
        match HashingEmbedder::default().embed(&text) {
            Ok(v) => prop_assert!((v.norm() - 1.0).abs() < 1e-9),
            // complete sign cancellation is possible, never a non-unit vector
            Err(e) => prop_assert!(matches!(e, qabd::embed::EmbedError::ZeroVector)),
        }
    }

    #[test]
    fn cosine_is_symmetric_and_reflexive(a in words(), b in words()) {
        let p = HashingEmbedder::default();
        if let (Ok(x), Ok(y)) = (p.embed(&a), p.embed(&b)) {
            prop_assert_eq!(cosine(&x, &y).unwrap(), cosine(&y, &x).unwrap());
            prop_assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        }
    }
}
