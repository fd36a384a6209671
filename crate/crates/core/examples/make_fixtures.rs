//! Regenerates the binary and derived fixtures under `fixtures/`:
//! toy model config and weights, and crafted logits files.
//!
//! cargo run -p qax-core --example make_fixtures

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use qax_core::decode::{write_logits_jsonl, LogitsRecord};
use qax_core::model::{ModelConfig, ModelWeights};
use qax_core::wordpiece::{align_answer, encode_pair, encoding_fingerprint, load_vocab, Alignment, Vocab};
use qax_core::{parse_squad, QaExample};

const CRAFTED_IDS: [&str; 3] = ["sb-1", "cf-1", "et-1"];

fn crafted(examples: &[QaExample], vocab: &Vocab, max_length: usize) -> Vec<LogitsRecord> {
    let fp = encoding_fingerprint(vocab, max_length);
    CRAFTED_IDS
        .iter()
        .map(|id| {
            let ex = examples.iter().find(|e| e.id == *id).expect("fixture id");
            let enc = encode_pair(&ex.question, &ex.context, vocab, max_length).unwrap();
            let Alignment::Span(span) = align_answer(&enc, &ex.answers[0]) else {
                panic!("{id} truncated away")
            };
            let mut start = vec![-2.0f32; max_length];
            let mut end = vec![-2.0f32; max_length];
            start[span.start] = 6.0;
            end[span.end] = 6.0;
            LogitsRecord {
                id: ex.id.clone(),
                start_logits: start,
                end_logits: end,
                encoding_fingerprint: fp.clone(),
            }
        })
        .collect()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let toy_vocab = load_vocab(dir.join("toy-vocab.txt")).unwrap();
    let config = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        hidden: 8,
        intermediate: 16,
        vocab_size: toy_vocab.len(),
        max_positions: 512,
        layer_norm_eps: 1e-12,
    };
    fs::write(
        dir.join("toy-weights.json"),
        serde_json::to_string_pretty(&config).unwrap() + "\n",
    )
    .unwrap();
    ModelWeights::random(config, 7, 0.5)
        .unwrap()
        .save(dir.join("toy-weights.qaw"))
        .unwrap();

    let (examples, _) = parse_squad(dir.join("mini-squad.json")).unwrap();
    let vocab = Vocab::bundled_uncased();
    for max_length in [384, 512] {
        let path = dir.join(format!("crafted-logits-{max_length}.jsonl"));
        let mut w = BufWriter::new(fs::File::create(path).unwrap());
        write_logits_jsonl(&crafted(&examples, &vocab, max_length), &mut w).unwrap();
    }
}
