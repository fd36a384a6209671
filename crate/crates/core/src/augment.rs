//! Question and context paraphrasing with answer-span preservation.
//!
//! Questions get their interrogatives rewritten ("what" → "which thing") and,
//! with probability `p`, lexicon words swapped for their first listed
//! synonym. Contexts get the same synonym swap, restricted to words outside
//! every gold answer; each answer's `char_start` is then shifted by the total
//! length change of the substitutions before it.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{GoldAnswer, QaExample};
use crate::error::{Error, Result};
use crate::text::char_len;

/// The lexicon shipped with the crate.
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

pub const DEFAULT_SUBSTITUTION_PROB: f64 = 0.15;

pub const QUESTION_SUFFIX: &str = "-qpara";
pub const CONTEXT_SUFFIX: &str = "-cpara";

const INTERROGATIVES: [(&str, &str); 2] = [("what", "which thing"), ("who", "which person")];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: HashMap<String, Vec<String>>,
    interrogatives: HashMap<String, String>,
}

impl SynonymLexicon {
    /// Lexicon with no synonym entries; interrogative rewriting still applies.
    pub fn empty() -> Self {
        SynonymLexicon {
            entries: HashMap::new(),
            interrogatives: INTERROGATIVES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well-formed")
    }

    /// Parse `headword<TAB>syn1,syn2,...` lines; `#` comments and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::empty();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Lexicon { line: i + 1, message };
            let (head, syns) = line
                .split_once('\t')
                .ok_or_else(|| err("expected headword<TAB>synonyms".into()))?;
            let head = head.trim();
            if head.is_empty() || head.chars().any(|c| !c.is_alphanumeric()) {
                return Err(err(format!("headword {head:?} must be a single word")));
            }
            if head.to_lowercase() != head {
                return Err(err(format!("headword {head:?} must be lowercase")));
            }
            let syns: Vec<String> = syns
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            if syns.is_empty() {
                return Err(err(format!("headword {head:?} has no replacements")));
            }
            if syns.iter().any(|s| s.to_lowercase() == head) {
                return Err(err(format!("headword {head:?} lists itself as a replacement")));
            }
            if lex.entries.insert(head.to_owned(), syns).is_some() {
                return Err(err(format!("duplicate headword {head:?}")));
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_synonym(&self, word: &str) -> Option<&str> {
        self.entries.get(word).and_then(|s| s.first()).map(String::as_str)
    }

    pub fn interrogative(&self, word: &str) -> Option<&str> {
        self.interrogatives.get(word).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    QuestionParaphrase,
    ContextParaphrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    /// Character position in the source text.
    pub char_pos: usize,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub source_id: String,
    pub new_id: String,
    pub kind: AugmentKind,
    pub substitutions: Vec<Substitution>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Paraphrase {
    Changed(QaExample, AugmentationRecord),
    Unchanged,
    /// The rewritten example failed the answer-span check and was discarded.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Probability of swapping each eligible lexicon word.
    pub p: f64,
    pub questions: bool,
    pub contexts: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p: DEFAULT_SUBSTITUTION_PROB,
            questions: true,
            contexts: true,
        }
    }
}

/// Alphanumeric runs of `text` as `(char_start, char_end, word)`.
fn word_spans(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        } else if !current.is_empty() {
            out.push((start, i, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        out.push((start, n, current));
    }
    out
}

fn match_case(original: &str, replacement: &str) -> String {
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return replacement.to_owned();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(f) => f.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Apply ascending, non-overlapping substitutions to `text`.
fn apply(text: &str, subs: &[Substitution]) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    let mut cursor = 0;
    for s in subs {
        out.extend(&chars[cursor..s.char_pos]);
        out.push_str(&s.new);
        cursor = s.char_pos + char_len(&s.old);
    }
    out.extend(&chars[cursor..]);
    out
}

pub fn paraphrase_question(example: &QaExample, lexicon: &SynonymLexicon, rng_seed: u64, p: f64) -> Paraphrase {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut subs = Vec::new();
    for (start, _, word) in word_spans(&example.question) {
        let lower = word.to_lowercase();
        let replacement = if let Some(r) = lexicon.interrogative(&lower) {
            Some(r)
        } else if let Some(r) = lexicon.first_synonym(&lower) {
            rng.gen_bool(p).then_some(r)
        } else {
            None
        };
        if let Some(r) = replacement {
            subs.push(Substitution {
                char_pos: start,
                new: match_case(&word, r),
                old: word,
            });
        }
    }
    if subs.is_empty() {
        return Paraphrase::Unchanged;
    }
    let new_id = format!("{}{}", example.id, QUESTION_SUFFIX);
    let rewritten = QaExample {
        id: new_id.clone(),
        question: apply(&example.question, &subs),
        ..example.clone()
    };
    Paraphrase::Changed(
        rewritten,
        AugmentationRecord {
            source_id: example.id.clone(),
            new_id,
            kind: AugmentKind::QuestionParaphrase,
            substitutions: subs,
        },
    )
}

pub fn paraphrase_context(example: &QaExample, lexicon: &SynonymLexicon, rng_seed: u64, p: f64) -> Paraphrase {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let touches_answer = |s: usize, e: usize| example.answers.iter().any(|a| s < a.char_end && a.char_start < e);
    let mut subs = Vec::new();
    for (start, end, word) in word_spans(&example.context) {
        if touches_answer(start, end) {
            continue;
        }
        let Some(r) = lexicon.first_synonym(&word.to_lowercase()) else {
            continue;
        };
        if rng.gen_bool(p) {
            subs.push(Substitution {
                char_pos: start,
                new: match_case(&word, r),
                old: word,
            });
        }
    }
    if subs.is_empty() {
        return Paraphrase::Unchanged;
    }

    let context = apply(&example.context, &subs);
    let answers: Vec<GoldAnswer> = example
        .answers
        .iter()
        .map(|a| {
            let delta: isize = subs
                .iter()
                .take_while(|s| s.char_pos < a.char_start)
                .map(|s| char_len(&s.new) as isize - char_len(&s.old) as isize)
                .sum();
            GoldAnswer::new(a.text.clone(), (a.char_start as isize + delta) as usize)
        })
        .collect();
    let new_id = format!("{}{}", example.id, CONTEXT_SUFFIX);
    let rewritten = QaExample {
        id: new_id.clone(),
        context,
        answers,
        ..example.clone()
    };
    if !rewritten.is_valid() {
        return Paraphrase::Rejected;
    }
    Paraphrase::Changed(
        rewritten,
        AugmentationRecord {
            source_id: example.id.clone(),
            new_id,
            kind: AugmentKind::ContextParaphrase,
            substitutions: subs,
        },
    )
}

/// Per-example generator seed: first 8 bytes of
/// `sha256(global_seed_le || kind || 0x00 || id)`, little-endian.
pub fn derive_seed(global_seed: u64, kind: AugmentKind, id: &str) -> u64 {
    let tag: &[u8] = match kind {
        AugmentKind::QuestionParaphrase => b"qpara",
        AugmentKind::ContextParaphrase => b"cpara",
    };
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(tag);
    h.update([0u8]);
    h.update(id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub n_original: usize,
    pub n_added: usize,
    pub target: usize,
    /// Candidates that produced no substitutions.
    pub n_unchanged: usize,
    /// Candidates discarded by the span post-check.
    pub n_rejected: usize,
    /// `target - (n_original + n_added)` when candidates ran out.
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCorpus {
    pub examples: Vec<QaExample>,
    pub records: Vec<AugmentationRecord>,
    pub summary: AugmentSummary,
}

/// Grow a corpus to `ceil(target_multiplier * n)` examples.
///
/// Originals come first, unmodified. Question paraphrases are appended in
/// input order, then context paraphrases, until the target is met or the
/// candidates run out. Each candidate uses a seed derived from
/// `(rng_seed, kind, id)`, so the output does not depend on `jobs`.
pub fn augment_corpus(
    examples: &[QaExample],
    lexicon: &SynonymLexicon,
    target_multiplier: f64,
    rng_seed: u64,
    config: &AugmentConfig,
    jobs: usize,
) -> Result<AugmentedCorpus> {
    if target_multiplier.is_nan() || target_multiplier < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "target multiplier must be >= 1, got {target_multiplier}"
        )));
    }
    if !(0.0..=1.0).contains(&config.p) {
        return Err(Error::InvalidArgument(format!(
            "substitution probability must be in [0, 1], got {}",
            config.p
        )));
    }
    let n = examples.len();
    let target = (target_multiplier * n as f64).ceil() as usize;
    let mut out = examples.to_vec();
    let mut records = Vec::new();
    let mut summary = AugmentSummary {
        n_original: n,
        target,
        ..Default::default()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut passes: Vec<AugmentKind> = Vec::new();
    if config.questions {
        passes.push(AugmentKind::QuestionParaphrase);
    }
    if config.contexts {
        passes.push(AugmentKind::ContextParaphrase);
    }

    for kind in passes {
        if out.len() >= target {
            break;
        }
        let run = |ex: &QaExample| {
            let seed = derive_seed(rng_seed, kind, &ex.id);
            match kind {
                AugmentKind::QuestionParaphrase => paraphrase_question(ex, lexicon, seed, config.p),
                AugmentKind::ContextParaphrase => paraphrase_context(ex, lexicon, seed, config.p),
            }
        };
        let outcomes: Vec<Paraphrase> = if jobs > 1 {
            pool.install(|| examples.par_iter().map(run).collect())
        } else {
            examples.iter().map(run).collect()
        };
        for outcome in outcomes {
            if out.len() >= target {
                break;
            }
            match outcome {
                Paraphrase::Changed(ex, rec) => {
                    out.push(ex);
                    records.push(rec);
                }
                Paraphrase::Unchanged => summary.n_unchanged += 1,
                Paraphrase::Rejected => summary.n_rejected += 1,
            }
        }
    }
    summary.n_added = out.len() - n;
    summary.shortfall = target.saturating_sub(out.len());
    Ok(AugmentedCorpus {
        examples: out,
        records,
        summary,
    })
}
