//! Extractive question answering over SQuAD v1.1 data: corpus parsing and
//! statistics, offset-preserving augmentation, WordPiece encoding, a
//! sentence-overlap baseline, a DistilBERT-shaped encoder for inference,
//! span decoding, SQuAD-style scoring and a latency harness.

pub mod augment;
pub mod baseline;
pub mod bench;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod text;
pub mod wordpiece;

pub use corpus::{load_dataset, parse_squad, CorpusSummary, GoldAnswer, QaExample};
pub use error::{Error, Result};
