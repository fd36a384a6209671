//! Uncased WordPiece tokenization with character offsets, question+context
//! pair encoding and gold-answer alignment.
//!
//! The pipeline mirrors the reference uncased BERT tokenizer:
//!
//! 1. drop NUL, U+FFFD and control characters; treat Zs and `\t\n\r` as spaces;
//! 2. isolate CJK ideographs as single-character words;
//! 3. lowercase, canonically decompose and drop nonspacing marks;
//! 4. split punctuation into single-character words;
//! 5. greedy longest-match-first WordPiece with `##` continuation pieces.
//!
//! Every normalized character remembers the index of the source character it
//! came from, so each token carries a `(char_start, char_end)` range into the
//! original text. Decoding slices the source text by those offsets instead of
//! re-joining subwords, which preserves casing and accents.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::char::decompose_canonical;

use crate::corpus::GoldAnswer;
use crate::error::{Error, Result};
use crate::text::CharIndex;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

pub const CONTINUATION_PREFIX: &str = "##";
pub const MAX_CHARS_PER_WORD: usize = 100;

/// Sequence length used for dataset preprocessing.
pub const DEFAULT_MAX_LENGTH: usize = 384;
/// Sequence length used for single-question inference.
pub const INFERENCE_MAX_LENGTH: usize = 512;

/// The only supported truncation mode: drop context tokens from the tail.
pub const TRUNCATION_ONLY_SECOND: &str = "only_second";

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
    content_hash: String,
    pub pad_id: u32,
    pub unk_id: u32,
    pub cls_id: u32,
    pub sep_id: u32,
    pub mask_id: u32,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut lookup = HashMap::with_capacity(tokens.len());
        let mut hasher = Sha256::new();
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocab(format!("empty token at line {}", i + 1)));
            }
            if lookup.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?} at line {}", i + 1)));
            }
            hasher.update(tok.as_bytes());
            hasher.update(b"\n");
        }
        let special = |name: &str| {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing special token {name}")))
        };
        Ok(Vocab {
            pad_id: special(PAD)?,
            unk_id: special(UNK)?,
            cls_id: special(CLS)?,
            sep_id: special(SEP)?,
            mask_id: special(MASK)?,
            content_hash: hex::encode(hasher.finalize()),
            tokens,
            lookup,
        })
    }

    /// Parse a vocabulary file body: one token per line, line number = id.
    pub fn parse(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Err(Error::Vocab("vocabulary is empty".into()));
        }
        Vocab::from_tokens(body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: u32) -> bool {
        [self.pad_id, self.unk_id, self.cls_id, self.sep_id, self.mask_id].contains(&id)
    }

    /// SHA-256 over the tokens, each followed by `\n`.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }
}

/// The 30,522-entry uncased BERT vocabulary shipped with the crate.
pub const BUNDLED_UNCASED_VOCAB: &str = include_str!("../data/vocab-uncased.txt");

impl Vocab {
    pub fn bundled_uncased() -> Self {
        Self::parse(BUNDLED_UNCASED_VOCAB).expect("bundled vocabulary is well-formed")
    }
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocab> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocab::parse(&text)
}

/// Stable identifier for an encoding configuration.
///
/// `"wp1-"` followed by the first 16 hex digits of
/// `sha256("<vocab content hash>\n<max_length>\nonly_second")`.
pub fn encoding_fingerprint(vocab: &Vocab, max_length: usize) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}\n{}\n{}", vocab.content_hash(), max_length, TRUNCATION_ONLY_SECOND).as_bytes());
    let digest = hex::encode(h.finalize());
    format!("wp1-{}", &digest[..16])
}

/// A basic-tokenized word. `source[i]` is the index of the original character
/// that produced `text`'s i-th character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicToken {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    source: Vec<usize>,
}

impl BasicToken {
    fn from_chars(chars: &[(char, usize)]) -> Self {
        let text: String = chars.iter().map(|(c, _)| *c).collect();
        let source: Vec<usize> = chars.iter().map(|(_, i)| *i).collect();
        BasicToken {
            text,
            char_start: source[0],
            char_end: source[source.len() - 1] + 1,
            source,
        }
    }

    /// Source character range for normalized characters `[lo, hi)`.
    fn source_range(&self, lo: usize, hi: usize) -> (usize, usize) {
        (self.source[lo], self.source[hi - 1] + 1)
    }
}

fn is_bert_whitespace(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r') || get_general_category(c) == GeneralCategory::SpaceSeparator
}

fn is_bert_control(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control
            | GeneralCategory::Format
            | GeneralCategory::Surrogate
            | GeneralCategory::PrivateUse
            | GeneralCategory::Unassigned
    )
}

fn is_bert_punctuation(c: char) -> bool {
    let cp = c as u32;
    if (33..=47).contains(&cp) || (58..=64).contains(&cp) || (91..=96).contains(&cp) || (123..=126).contains(&cp) {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_cjk(c: char) -> bool {
    let cp = c as u32;
    (0x4E00..=0x9FFF).contains(&cp)
        || (0x3400..=0x4DBF).contains(&cp)
        || (0x20000..=0x2A6DF).contains(&cp)
        || (0x2A700..=0x2B73F).contains(&cp)
        || (0x2B740..=0x2B81F).contains(&cp)
        || (0x2B820..=0x2CEAF).contains(&cp)
        || (0xF900..=0xFAFF).contains(&cp)
        || (0x2F800..=0x2FA1F).contains(&cp)
}

/// Lowercase + strip accents for one source character.
fn normalize_char(c: char, mut emit: impl FnMut(char)) {
    for lc in c.to_lowercase() {
        decompose_canonical(lc, |d| {
            if get_general_category(d) != GeneralCategory::NonspacingMark {
                emit(d);
            }
        });
    }
}

pub fn basic_tokenize(text: &str) -> Vec<BasicToken> {
    let mut words = Vec::new();
    let mut current: Vec<(char, usize)> = Vec::new();
    let flush = |current: &mut Vec<(char, usize)>, words: &mut Vec<BasicToken>| {
        if !current.is_empty() {
            words.push(BasicToken::from_chars(current));
            current.clear();
        }
    };

    for (i, c) in text.chars().enumerate() {
        if c == '\0' || c == '\u{FFFD}' || is_bert_control(c) {
            continue;
        }
        if is_bert_whitespace(c) {
            flush(&mut current, &mut words);
            continue;
        }
        if is_cjk(c) {
            flush(&mut current, &mut words);
            let mut single = Vec::new();
            normalize_char(c, |d| single.push((d, i)));
            flush(&mut single, &mut words);
            continue;
        }
        normalize_char(c, |d| {
            if is_bert_punctuation(d) {
                flush(&mut current, &mut words);
                words.push(BasicToken::from_chars(&[(d, i)]));
            } else {
                current.push((d, i));
            }
        });
    }
    flush(&mut current, &mut words);
    words
}

/// One WordPiece piece: vocabulary id plus its normalized-character range
/// within the word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Piece {
    id: u32,
    lo: usize,
    hi: usize,
}

/// Greedy longest-match-first split. `None` means the whole word maps to unk.
fn wordpiece_pieces(chars: &[char], vocab: &Vocab) -> Option<Vec<Piece>> {
    if chars.len() > MAX_CHARS_PER_WORD {
        return None;
    }
    let mut pieces = Vec::new();
    let mut buf = String::new();
    let mut start = 0;
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            buf.clear();
            if start > 0 {
                buf.push_str(CONTINUATION_PREFIX);
            }
            buf.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&buf) {
                found = Some(Piece { id, lo: start, hi: end });
                break;
            }
        }
        let piece = found?;
        start = piece.hi;
        pieces.push(piece);
    }
    Some(pieces)
}

/// WordPiece-split one already basic-tokenized word into token strings.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocab) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    match wordpiece_pieces(&chars, vocab) {
        Some(pieces) => pieces
            .iter()
            .map(|p| vocab.token(p.id).expect("id from lookup").to_owned())
            .collect(),
        None => vec![UNK.to_owned()],
    }
}

/// Tokenize text into `(id, char_start, char_end)` triples over the source.
/// Unknown words keep the whole word's source range.
pub fn tokenize_with_offsets(text: &str, vocab: &Vocab) -> Vec<(u32, usize, usize)> {
    let mut out = Vec::new();
    for word in basic_tokenize(text) {
        let chars: Vec<char> = word.text.chars().collect();
        match wordpiece_pieces(&chars, vocab) {
            Some(pieces) => {
                for p in pieces {
                    let (s, e) = word.source_range(p.lo, p.hi);
                    out.push((p.id, s, e));
                }
            }
            None => out.push((vocab.unk_id, word.char_start, word.char_end)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    Span(TokenSpan),
    TruncatedAway,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    /// Exactly `max_length` ids: `[CLS] q… [SEP] c… [SEP] [PAD]…`.
    pub ids: Vec<u32>,
    /// Context-token offsets into the original context; `(0, 0)` elsewhere.
    pub offsets: Vec<(usize, usize)>,
    /// Offsets of question tokens into the question, index `i` ↔ position `i + 1`.
    pub question_offsets: Vec<(usize, usize)>,
    pub first_sep_index: usize,
    pub second_sep_index: usize,
    /// `(lo, hi)`, exclusive `hi`.
    pub context_token_range: (usize, usize),
    pub truncated: bool,
    pub max_length: usize,
    question: String,
    context: String,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-padding positions.
    pub fn seq_len(&self) -> usize {
        self.second_sep_index + 1
    }

    pub fn attention_mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|i| i < self.seq_len()).collect()
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn in_context(&self, idx: usize) -> bool {
        let (lo, hi) = self.context_token_range;
        idx >= lo && idx < hi
    }
}

pub fn encode_pair(question: &str, context: &str, vocab: &Vocab, max_length: usize) -> Result<Encoding> {
    let q_tokens = tokenize_with_offsets(question, vocab);
    let room = max_length.saturating_sub(3);
    if q_tokens.len() > room {
        return Err(Error::QuestionTooLong {
            tokens: q_tokens.len(),
            max_length,
            room,
        });
    }
    let mut c_tokens = tokenize_with_offsets(context, vocab);
    let context_room = room - q_tokens.len();
    let truncated = c_tokens.len() > context_room;
    c_tokens.truncate(context_room);

    let mut ids = Vec::with_capacity(max_length);
    let mut offsets = Vec::with_capacity(max_length);
    ids.push(vocab.cls_id);
    offsets.push((0, 0));
    for &(id, _, _) in &q_tokens {
        ids.push(id);
        offsets.push((0, 0));
    }
    let first_sep_index = ids.len();
    ids.push(vocab.sep_id);
    offsets.push((0, 0));
    for &(id, s, e) in &c_tokens {
        ids.push(id);
        offsets.push((s, e));
    }
    let second_sep_index = ids.len();
    ids.push(vocab.sep_id);
    offsets.push((0, 0));
    ids.resize(max_length, vocab.pad_id);
    offsets.resize(max_length, (0, 0));

    Ok(Encoding {
        ids,
        offsets,
        question_offsets: q_tokens.iter().map(|&(_, s, e)| (s, e)).collect(),
        first_sep_index,
        second_sep_index,
        context_token_range: (first_sep_index + 1, second_sep_index),
        truncated,
        max_length,
        question: question.to_owned(),
        context: context.to_owned(),
    })
}

/// Locate a gold answer in context-token space. Intersection is half-open on
/// both sides, so a token that merely touches `char_end` is excluded.
pub fn align_answer(encoding: &Encoding, answer: &GoldAnswer) -> Alignment {
    let (lo, hi) = encoding.context_token_range;
    let mut span: Option<TokenSpan> = None;
    for idx in lo..hi {
        let (ts, te) = encoding.offsets[idx];
        if ts < answer.char_end && answer.char_start < te {
            span = Some(match span {
                None => TokenSpan { start: idx, end: idx },
                Some(s) => TokenSpan {
                    start: s.start,
                    end: idx,
                },
            });
        } else if span.is_some() && ts >= answer.char_end {
            break;
        }
    }
    span.map_or(Alignment::TruncatedAway, Alignment::Span)
}

/// Source text covered by a context-token span.
pub fn decode_tokens(encoding: &Encoding, span: TokenSpan) -> Result<String> {
    let (lo, hi) = encoding.context_token_range;
    if span.start > span.end || span.start < lo || span.end >= hi {
        return Err(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            lo,
            hi,
        });
    }
    let start = encoding.offsets[span.start].0;
    let end = encoding.offsets[span.end].1;
    let idx = CharIndex::new(&encoding.context);
    idx.slice(&encoding.context, start, end)
        .map(str::to_owned)
        .ok_or(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            lo,
            hi,
        })
}

/// Source text covered by a span of question tokens (positions `1..first_sep`).
pub fn decode_question_tokens(encoding: &Encoding, span: TokenSpan) -> Result<String> {
    let (lo, hi) = (1, encoding.first_sep_index);
    if span.start > span.end || span.start < lo || span.end >= hi {
        return Err(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            lo,
            hi,
        });
    }
    let start = encoding.question_offsets[span.start - 1].0;
    let end = encoding.question_offsets[span.end - 1].1;
    let idx = CharIndex::new(&encoding.question);
    idx.slice(&encoding.question, start, end)
        .map(str::to_owned)
        .ok_or(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            lo,
            hi,
        })
}

/// Lowercase + accent-strip a string the way tokens are normalized.
pub fn normalize_for_vocab(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        normalize_char(c, |d| out.push(d));
    }
    out
}
