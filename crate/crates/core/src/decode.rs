//! Span decoding from start/end logits, and evaluation of logits produced
//! elsewhere.
//!
//! Two decoders:
//!
//! * [`decode_independent`] takes the argmax of each head separately and
//!   accepts the pair only if it forms a valid span.
//! * [`decode_joint`] maximizes `start[s] + end[e]` over valid pairs with a
//!   length cap.
//!
//! A span is valid when `lo <= s <= e < hi`. By default `[lo, hi)` is the
//! context segment. [`Constraint::ListingCompat`] instead bounds answers by
//! the first separator (`0 < s`, `e < first_sep`), which for the
//! `(question, context)` input order selects the question segment; it exists
//! only to study that behavior.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QaExample;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, score_against_golds, EvalReport, ExampleScore, POSITION_ACCURACY_NOTE};
use crate::model::SpanLogits;
use crate::wordpiece::{
    align_answer, decode_question_tokens, decode_tokens, encode_pair, encoding_fingerprint, Alignment, Encoding,
    TokenSpan, Vocab,
};

pub const DEFAULT_MAX_ANSWER_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoAnswerReason {
    /// End argmax precedes start argmax.
    Inverted,
    /// A head's argmax falls outside the answerable range.
    OutOfContext,
    /// The answerable range has no tokens.
    EmptyContext,
}

impl NoAnswerReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NoAnswerReason::Inverted => "inverted",
            NoAnswerReason::OutOfContext => "out_of_context",
            NoAnswerReason::EmptyContext => "empty_context",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpanPrediction {
    Answer {
        text: String,
        token_start: usize,
        token_end: usize,
    },
    NoAnswer(NoAnswerReason),
}

impl SpanPrediction {
    pub fn span(&self) -> Option<TokenSpan> {
        match self {
            SpanPrediction::Answer {
                token_start, token_end, ..
            } => Some(TokenSpan {
                start: *token_start,
                end: *token_end,
            }),
            SpanPrediction::NoAnswer(_) => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            SpanPrediction::Answer { text, .. } => Some(text),
            SpanPrediction::NoAnswer(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    /// `first_sep < s <= e < second_sep`.
    #[default]
    Context,
    /// `0 < s <= e < first_sep`, the literal first-separator bound.
    ListingCompat,
}

impl Constraint {
    /// Half-open `[lo, hi)` of admissible token positions.
    pub fn range(self, encoding: &Encoding) -> (usize, usize) {
        match self {
            Constraint::Context => encoding.context_token_range,
            Constraint::ListingCompat => (1, encoding.first_sep_index),
        }
    }

    fn text(self, encoding: &Encoding, span: TokenSpan) -> Result<String> {
        match self {
            Constraint::Context => decode_tokens(encoding, span),
            Constraint::ListingCompat => decode_question_tokens(encoding, span),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    #[default]
    Independent,
    Joint {
        max_answer_len: usize,
    },
}

fn check_lengths(logits: &SpanLogits, encoding: &Encoding) -> Result<()> {
    if logits.start_logits.len() != logits.end_logits.len() {
        return Err(Error::LengthMismatch {
            what: "start and end logits",
            left: logits.start_logits.len(),
            right: logits.end_logits.len(),
        });
    }
    if logits.start_logits.len() != encoding.len() {
        return Err(Error::LengthMismatch {
            what: "logits and encoding",
            left: logits.start_logits.len(),
            right: encoding.len(),
        });
    }
    Ok(())
}

/// Index of the maximum, lowest index on ties. `None` for an empty slice.
pub fn argmax(xs: &[f32]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn decode_independent(logits: &SpanLogits, encoding: &Encoding, constraint: Constraint) -> Result<SpanPrediction> {
    check_lengths(logits, encoding)?;
    let (lo, hi) = constraint.range(encoding);
    let (Some(s), Some(e)) = (argmax(&logits.start_logits), argmax(&logits.end_logits)) else {
        return Ok(SpanPrediction::NoAnswer(NoAnswerReason::EmptyContext));
    };
    if s > e {
        return Ok(SpanPrediction::NoAnswer(NoAnswerReason::Inverted));
    }
    if s < lo || e >= hi {
        return Ok(SpanPrediction::NoAnswer(NoAnswerReason::OutOfContext));
    }
    let span = TokenSpan { start: s, end: e };
    Ok(SpanPrediction::Answer {
        text: constraint.text(encoding, span)?,
        token_start: s,
        token_end: e,
    })
}

/// Best `(s, e)` over `lo <= s <= e < hi`, `e - s < max_answer_len`, ties to
/// the smallest `s` and then the smallest `e`. Linear time: for each `e`, the
/// best start in the window `[e - max_answer_len + 1, e]` comes from a
/// monotonic queue.
pub fn best_joint_span(
    start: &[f32],
    end: &[f32],
    lo: usize,
    hi: usize,
    max_answer_len: usize,
) -> Option<(usize, usize)> {
    let hi = hi.min(start.len()).min(end.len());
    if lo >= hi || max_answer_len == 0 {
        return None;
    }
    // Indices with strictly decreasing start values; equal values keep the
    // earlier index in front.
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut best: Option<(f32, usize, usize)> = None;
    for e in lo..hi {
        while window.back().is_some_and(|&b| start[b] < start[e]) {
            window.pop_back();
        }
        window.push_back(e);
        let first_allowed = (e + 1).saturating_sub(max_answer_len).max(lo);
        while window.front().is_some_and(|&f| f < first_allowed) {
            window.pop_front();
        }
        let s = *window.front().expect("e itself is in the window");
        let score = start[s] + end[e];
        let better = match best {
            None => true,
            Some((b, bs, _)) => score > b || (score == b && s < bs),
        };
        if better {
            best = Some((score, s, e));
        }
    }
    best.map(|(_, s, e)| (s, e))
}

pub fn decode_joint(
    logits: &SpanLogits,
    encoding: &Encoding,
    max_answer_len: usize,
    constraint: Constraint,
) -> Result<SpanPrediction> {
    check_lengths(logits, encoding)?;
    if max_answer_len == 0 {
        return Err(Error::InvalidArgument("max_answer_len must be >= 1".into()));
    }
    let (lo, hi) = constraint.range(encoding);
    match best_joint_span(&logits.start_logits, &logits.end_logits, lo, hi, max_answer_len) {
        None => Ok(SpanPrediction::NoAnswer(NoAnswerReason::EmptyContext)),
        Some((s, e)) => {
            let span = TokenSpan { start: s, end: e };
            Ok(SpanPrediction::Answer {
                text: constraint.text(encoding, span)?,
                token_start: s,
                token_end: e,
            })
        }
    }
}

pub fn decode(
    logits: &SpanLogits,
    encoding: &Encoding,
    mode: DecodeMode,
    constraint: Constraint,
) -> Result<SpanPrediction> {
    match mode {
        DecodeMode::Independent => decode_independent(logits, encoding, constraint),
        DecodeMode::Joint { max_answer_len } => decode_joint(logits, encoding, max_answer_len, constraint),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub id: String,
    pub start_logits: Vec<f32>,
    pub end_logits: Vec<f32>,
    pub encoding_fingerprint: String,
}

impl LogitsRecord {
    pub fn logits(&self) -> SpanLogits {
        SpanLogits {
            start_logits: self.start_logits.clone(),
            end_logits: self.end_logits.clone(),
        }
    }
}

pub fn parse_logits_jsonl(bytes: &[u8]) -> Result<Vec<LogitsRecord>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::LogitsRecord {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: LogitsRecord = serde_json::from_str(raw).map_err(|e| Error::LogitsRecord {
            line,
            message: e.to_string(),
        })?;
        if rec.start_logits.len() != rec.end_logits.len() {
            return Err(Error::LogitsRecord {
                line,
                message: format!(
                    "start_logits has {} values but end_logits has {}",
                    rec.start_logits.len(),
                    rec.end_logits.len()
                ),
            });
        }
        if rec.start_logits.iter().chain(&rec.end_logits).any(|v| !v.is_finite()) {
            return Err(Error::LogitsRecord {
                line,
                message: "non-finite logit".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_logits_jsonl(path: impl AsRef<Path>) -> Result<Vec<LogitsRecord>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_logits_jsonl(&bytes)
}

pub fn write_logits_jsonl<W: Write>(records: &[LogitsRecord], w: &mut W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogitsEvalConfig {
    pub max_length: usize,
    pub mode: DecodeMode,
    pub constraint: Constraint,
    pub jobs: usize,
}

enum Outcome {
    Scored(ExampleScore, Option<NoAnswerReason>),
    Skipped,
}

fn eval_one(ex: &QaExample, record: &LogitsRecord, vocab: &Vocab, cfg: &LogitsEvalConfig) -> Result<Outcome> {
    let encoding = encode_pair(&ex.question, &ex.context, vocab, cfg.max_length)?;
    let gold_span = ex.answers.iter().find_map(|a| match align_answer(&encoding, a) {
        Alignment::Span(s) => Some(s),
        Alignment::TruncatedAway => None,
    });
    let Some(gold_span) = gold_span else {
        return Ok(Outcome::Skipped);
    };
    let logits = record.logits();
    let prediction = decode(&logits, &encoding, cfg.mode, cfg.constraint)?;
    let golds: Vec<&str> = ex.answers.iter().map(|a| a.text.as_str()).collect();
    let (f1, em, reason) = match &prediction {
        SpanPrediction::Answer { text, .. } => {
            let (f1, em) = score_against_golds(text, &golds);
            (f1, em, None)
        }
        SpanPrediction::NoAnswer(r) => {
            let (f1, em) = score_against_golds("", &golds);
            (f1, em, Some(*r))
        }
    };
    // Position accuracy scores the raw head argmaxes, independent of decoding.
    let head_span = TokenSpan {
        start: argmax(&logits.start_logits).unwrap_or(0),
        end: argmax(&logits.end_logits).unwrap_or(0),
    };
    Ok(Outcome::Scored(
        ExampleScore {
            id: ex.id.clone(),
            f1,
            em,
            positions: Some((head_span, gold_span)),
        },
        reason,
    ))
}

/// Re-encode every example, decode its logits record and score the answer.
///
/// Every record's fingerprint must match `vocab` and `cfg.max_length`, and
/// every example must have exactly one record; records for other ids are
/// ignored. Examples
/// whose gold answers are all truncated away are counted in `n_skipped`.
pub fn eval_logits(
    examples: &[QaExample],
    records: &[LogitsRecord],
    vocab: &Vocab,
    cfg: &LogitsEvalConfig,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("eval_logits needs at least one example"));
    }
    let mut by_id: HashMap<&str, &LogitsRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(Error::DuplicateLogits(r.id.clone()));
        }
    }
    // A file produced under other tokenization settings is rejected as a
    // whole, before any id bookkeeping.
    let expected_fp = encoding_fingerprint(vocab, cfg.max_length);
    if let Some(r) = records.iter().find(|r| r.encoding_fingerprint != expected_fp) {
        return Err(Error::FingerprintMismatch {
            id: r.id.clone(),
            expected: expected_fp,
            found: r.encoding_fingerprint.clone(),
        });
    }
    let paired: Vec<(&QaExample, &LogitsRecord)> = examples
        .iter()
        .map(|ex| {
            by_id
                .get(ex.id.as_str())
                .map(|r| (ex, *r))
                .ok_or_else(|| Error::MissingLogits(ex.id.clone()))
        })
        .collect::<Result<_>>()?;
    let run = |&(ex, rec): &(&QaExample, &LogitsRecord)| eval_one(ex, rec, vocab, cfg);
    let outcomes: Vec<Outcome> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| paired.par_iter().map(run).collect::<Result<_>>())?
    } else {
        paired.iter().map(run).collect::<Result<_>>()?
    };

    let mut scores = Vec::with_capacity(outcomes.len());
    let mut skipped = 0;
    let mut no_answer: BTreeMap<String, usize> = BTreeMap::new();
    for o in outcomes {
        match o {
            Outcome::Skipped => skipped += 1,
            Outcome::Scored(score, reason) => {
                if let Some(r) = reason {
                    *no_answer.entry(r.as_str().to_owned()).or_default() += 1;
                }
                scores.push(score);
            }
        }
    }
    Ok(aggregate(scores, skipped, no_answer, POSITION_ACCURACY_NOTE))
}

pub fn eval_logits_file(
    examples: &[QaExample],
    logits_path: impl AsRef<Path>,
    vocab: &Vocab,
    cfg: &LogitsEvalConfig,
) -> Result<EvalReport> {
    let records = read_logits_jsonl(logits_path)?;
    eval_logits(examples, &records, vocab, cfg)
}
