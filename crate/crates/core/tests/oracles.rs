mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use qax_core::decode::{best_joint_span, decode_independent, decode_joint, Constraint, SpanPrediction};
use qax_core::metrics::{exact_match, token_f1};
use qax_core::model::SpanLogits;
use qax_core::wordpiece::{encode_pair, wordpiece_tokenize, Vocab};

#[test]
fn token_f1_matches_brute_force_pairing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2_000 {
        let p = fuzz_answer(&mut rng);
        let g = if rng.gen_bool(0.3) {
            p.clone()
        } else {
            fuzz_answer(&mut rng)
        };
        assert_eq!(token_f1(&p, &g), brute_force_f1(&p, &g), "{p:?} vs {g:?}");
        if exact_match(&p, &g) == 1.0 {
            assert_eq!(token_f1(&p, &g), 1.0);
        }
    }
}

#[test]
fn reference_normalizer_agrees_on_hand_cases() {
    assert_eq!(reference_normalize_tokens("The Denver Broncos!"), ["denver", "broncos"]);
    assert!(reference_normalize_tokens("a an the").is_empty());
    assert_eq!(reference_normalize_tokens("theatre"), ["theatre"]);
}

#[test]
fn wordpiece_matches_exhaustive_longest_match() {
    let vocab = Vocab::from_tokens(ORACLE_VOCAB).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut non_unk = 0;
    for _ in 0..10_000 {
        let w = fuzz_word(&mut rng);
        let got = wordpiece_tokenize(&w, &vocab);
        assert_eq!(got, reference_wordpiece(&w, &vocab), "word {w:?}");
        non_unk += usize::from(got != ["[UNK]"]);
    }
    // The fuzz must exercise both branches.
    assert!(non_unk > 1_000, "{non_unk}");
    assert!(non_unk < 9_900, "{non_unk}");
}

#[test]
fn joint_decode_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1_000 {
        let n = rng.gen_range(1..64);
        let start = fuzz_logits(&mut rng, n);
        let end = fuzz_logits(&mut rng, n);
        let lo = rng.gen_range(0..n);
        let hi = rng.gen_range(lo..=n);
        let max_len = rng.gen_range(1..40);
        assert_eq!(
            best_joint_span(&start, &end, lo, hi, max_len),
            exhaustive_joint(&start, &end, lo, hi, max_len),
            "lo {lo} hi {hi} max_len {max_len}"
        );
    }
}

fn fuzz_encoding(rng: &mut ChaCha8Rng) -> qax_core::wordpiece::Encoding {
    let vocab = toy_vocab();
    let words = [
        "denver", "broncos", "won", "the", "super", "bowl", "carolina", "team", "game",
    ];
    let q: Vec<&str> = (0..rng.gen_range(1..5))
        .map(|_| words[rng.gen_range(0..words.len())])
        .collect();
    let c: Vec<&str> = (0..rng.gen_range(0..30))
        .map(|_| words[rng.gen_range(0..words.len())])
        .collect();
    encode_pair(&q.join(" "), &c.join(" "), &vocab, 40).unwrap()
}

#[test]
fn decode_properties_on_fuzzed_encodings() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let enc = fuzz_encoding(&mut rng);
        let logits = SpanLogits {
            start_logits: fuzz_logits(&mut rng, enc.len()),
            end_logits: fuzz_logits(&mut rng, enc.len()),
        };
        let (lo, hi) = enc.context_token_range;
        let joint = decode_joint(&logits, &enc, enc.len(), Constraint::Context).unwrap();
        if let Some(span) = joint.span() {
            assert!(lo <= span.start && span.start <= span.end && span.end < hi);
        } else {
            assert_eq!(lo, hi);
        }
        if let SpanPrediction::Answer {
            token_start, token_end, ..
        } = decode_independent(&logits, &enc, Constraint::Context).unwrap()
        {
            let j = joint.span().expect("independent answer implies a non-empty range");
            let ind_score = logits.start_logits[token_start] + logits.end_logits[token_end];
            let joint_score = logits.start_logits[j.start] + logits.end_logits[j.end];
            assert!(joint_score >= ind_score);
        }

        let shift = rng.gen_range(-50i32..=50) as f32;
        let shifted = SpanLogits {
            start_logits: logits.start_logits.iter().map(|x| x + shift).collect(),
            end_logits: logits.end_logits.iter().map(|x| x + shift).collect(),
        };
        assert_eq!(
            decode_independent(&logits, &enc, Constraint::Context).unwrap(),
            decode_independent(&shifted, &enc, Constraint::Context).unwrap()
        );
        assert_eq!(
            joint,
            decode_joint(&shifted, &enc, enc.len(), Constraint::Context).unwrap()
        );
    }
}
