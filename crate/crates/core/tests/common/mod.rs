//! Independent reference implementations and fixture helpers, shared by the
//! integration and acceptance tests. The references favor obviousness over
//! speed.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qax_core::corpus::{parse_squad, GoldAnswer, QaExample};
use qax_core::model::{load_weights, ModelConfig, ModelWeights};
use qax_core::wordpiece::{load_vocab, Vocab};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn mini_squad() -> Vec<QaExample> {
    parse_squad(fixture("mini-squad.json")).expect("mini corpus parses").0
}

pub fn toy_vocab() -> Vocab {
    load_vocab(fixture("toy-vocab.txt")).expect("toy vocab")
}

pub fn toy_model() -> ModelWeights {
    let cfg = ModelConfig::load(fixture("toy-weights.json")).expect("toy config");
    load_weights(fixture("toy-weights.qaw"), cfg).expect("toy weights")
}

// ------------------------------------------------------------ augmentation

/// Template corpus dense in lexicon headwords; answers are proper nouns or years.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<QaExample> {
    let adjectives = [
        "large",
        "small",
        "important",
        "famous",
        "ancient",
        "modern",
        "major",
        "popular",
    ];
    let nouns = [
        "city",
        "church",
        "university",
        "company",
        "building",
        "school",
        "market",
        "house",
    ];
    let verbs = [
        "founded",
        "built",
        "created",
        "opened",
        "designed",
        "established",
        "developed",
        "produced",
    ];
    let names = [
        "Alvarez",
        "Okafor",
        "Lindqvist",
        "Nakamura",
        "Ferreira",
        "Dubois",
        "Kowalski",
        "Haddad",
    ];
    let places = [
        "Lisbon",
        "Kraków",
        "Osaka",
        "Québec",
        "Nairobi",
        "Tromsø",
        "Valparaíso",
        "Tbilisi",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let adj = adjectives.choose(&mut rng).unwrap();
            let noun = nouns.choose(&mut rng).unwrap();
            let verb = verbs.choose(&mut rng).unwrap();
            let name = names.choose(&mut rng).unwrap();
            let place = places.choose(&mut rng).unwrap();
            let year = rng.gen_range(1100..2020);
            let lead = format!("The {adj} {noun} in {place} was {verb} by {name} in {year}. ");
            let tail = "Many people said it became very important during the early century, \
                        and it is still used by students and several leaders. ";
            let (question, answer, context) = match rng.gen_range(0..3) {
                0 => (
                    format!("Who {verb} the {adj} {noun}?"),
                    name.to_string(),
                    format!("{lead}{tail}"),
                ),
                1 => (
                    format!("What year was the {noun} {verb}?"),
                    year.to_string(),
                    format!("{tail}{lead}"),
                ),
                _ => (
                    format!("Where is the {adj} {noun} located?"),
                    place.to_string(),
                    format!("{lead}{tail}{lead}"),
                ),
            };
            let start = context.find(&answer).unwrap();
            let start = context[..start].chars().count();
            QaExample {
                id: format!("syn-{i}"),
                title: "synthetic".into(),
                context,
                question,
                answers: vec![GoldAnswer::new(answer, start)],
            }
        })
        .collect()
}

// ---------------------------------------------------------------- metrics

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

fn is_word_char(c: char) -> bool {
    // `\w` of the regex crate: alphanumeric, marks, connector punctuation.
    c.is_alphanumeric() || c == '_' || unicode_mark(c)
}

fn unicode_mark(c: char) -> bool {
    matches!(c, '\u{0300}'..='\u{036f}')
}

/// Normalization written character by character: lowercase, delete ASCII
/// punctuation, blank out whole-word articles, split on whitespace.
pub fn reference_normalize_tokens(s: &str) -> Vec<String> {
    let lowered: Vec<char> = s.to_lowercase().chars().filter(|c| !PUNCT.contains(*c)).collect();
    let mut kept = String::new();
    let mut i = 0;
    while i < lowered.len() {
        if is_word_char(lowered[i]) {
            let mut j = i;
            while j < lowered.len() && is_word_char(lowered[j]) {
                j += 1;
            }
            let word: String = lowered[i..j].iter().collect();
            if word == "a" || word == "an" || word == "the" {
                kept.push(' ');
            } else {
                kept.push_str(&word);
            }
            i = j;
        } else {
            kept.push(lowered[i]);
            i += 1;
        }
    }
    kept.split_whitespace().map(str::to_owned).collect()
}

/// Token F1 by explicit pairing: each prediction token claims the first
/// unclaimed equal gold token.
pub fn brute_force_f1(prediction: &str, gold: &str) -> f64 {
    let p = reference_normalize_tokens(prediction);
    let g = reference_normalize_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut claimed = vec![false; g.len()];
    let mut matches = 0usize;
    for pt in &p {
        for (j, gt) in g.iter().enumerate() {
            if !claimed[j] && pt == gt {
                claimed[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let precision = matches as f64 / p.len() as f64;
    let recall = matches as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

const FUZZ_WORDS: [&str; 16] = [
    "a", "an", "the", "The", "denver", "Broncos", "cat", "dog", "x", "café", "2016", "24–10", "naïve", "an't",
    "theatre", "€5",
];
const FUZZ_GLUE: [&str; 8] = [" ", "  ", "\t", ", ", ". ", "-", "'", "!"];

pub fn fuzz_answer(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..7);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(FUZZ_WORDS[rng.gen_range(0..FUZZ_WORDS.len())]);
        s.push_str(FUZZ_GLUE[rng.gen_range(0..FUZZ_GLUE.len())]);
    }
    s
}

// -------------------------------------------------------------- wordpiece

/// 50 entries: specials, whole words and continuation pieces over a small alphabet.
pub const ORACLE_VOCAB: [&str; 50] = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "c", "d", "e", "ab", "abc", "ba", "bad", "cab", "dab",
    "de", "dead", "ace", "bead", "##a", "##b", "##c", "##d", "##e", "##ab", "##ba", "##bc", "##cd", "##de", "##ead",
    "##abc", "##dd", "##ee", "##eed", "##bad", "##cab", "##aa", "##bb", "##ccc", "f", "##f", "fa", "##fe", "##ef",
    "face", "##ace", "fad", "##ade", "##g",
];

/// Longest-match-first WordPiece by scanning the whole vocabulary at every
/// position rather than probing decreasing substrings.
pub fn reference_wordpiece(word: &str, vocab: &Vocab) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > 100 {
        return vec!["[UNK]".to_owned()];
    }
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let mut best: Option<(usize, String)> = None;
        for id in 0..vocab.len() as u32 {
            let tok = vocab.token(id).unwrap();
            let body = if pos == 0 {
                if tok.starts_with("##") {
                    continue;
                }
                tok
            } else {
                match tok.strip_prefix("##") {
                    Some(b) => b,
                    None => continue,
                }
            };
            let body_chars: Vec<char> = body.chars().collect();
            if body_chars.is_empty() || pos + body_chars.len() > chars.len() {
                continue;
            }
            if chars[pos..pos + body_chars.len()] == body_chars[..]
                && best.as_ref().is_none_or(|(len, _)| body_chars.len() > *len)
            {
                best = Some((body_chars.len(), tok.to_owned()));
            }
        }
        match best {
            Some((len, tok)) => {
                out.push(tok);
                pos += len;
            }
            None => return vec!["[UNK]".to_owned()],
        }
    }
    out
}

pub fn fuzz_word(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: [char; 8] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];
    let len = if rng.gen_bool(0.005) {
        rng.gen_range(95..110)
    } else {
        rng.gen_range(1..12)
    };
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

// ----------------------------------------------------------------- decode

/// Exhaustive O(n²) joint span search, same tie rule as the decoder.
#[allow(clippy::needless_range_loop)]
pub fn exhaustive_joint(start: &[f32], end: &[f32], lo: usize, hi: usize, max_len: usize) -> Option<(usize, usize)> {
    let mut best: Option<(f32, usize, usize)> = None;
    for s in lo..hi {
        for e in s..hi {
            if e - s >= max_len {
                break;
            }
            let score = start[s] + end[e];
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s, e));
            }
        }
    }
    best.map(|(_, s, e)| (s, e))
}

/// Logits for fuzzing: either coarse quarter-steps (many ties) or dyadic
/// values on a 1/64 grid, both exactly representable.
pub fn fuzz_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    if rng.gen_bool(0.5) {
        (0..n).map(|_| rng.gen_range(-4i32..=4) as f32 / 4.0).collect()
    } else {
        (0..n).map(|_| rng.gen_range(-640i32..=640) as f32 / 64.0).collect()
    }
}
