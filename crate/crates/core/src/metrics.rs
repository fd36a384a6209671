//! SQuAD-style answer scoring.
//!
//! Normalization follows the official v1.1 evaluation script: lowercase,
//! drop ASCII punctuation, drop the articles `a`/`an`/`the`, squeeze
//! whitespace. Token F1 counts overlap with multiplicity.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wordpiece::TokenSpan;

pub const POSITION_ACCURACY_NOTE: &str =
    "position_accuracy = mean over examples of ([start == gold start] + [end == gold end]) / 2";
pub const BASELINE_ACCURACY_NOTE: &str =
    "span-text baseline has no token positions: exact_match stands in for accuracy";

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

pub fn normalize_text(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_text(prediction);
    let gold = normalize_text(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    if normalize_text(prediction) == normalize_text(gold) {
        1.0
    } else {
        0.0
    }
}

/// Best `(f1, em)` over all gold answers.
pub fn score_against_golds<S: AsRef<str>>(prediction: &str, golds: &[S]) -> (f64, f64) {
    golds.iter().fold((0.0f64, 0.0f64), |(f1, em), g| {
        (
            f1.max(token_f1(prediction, g.as_ref())),
            em.max(exact_match(prediction, g.as_ref())),
        )
    })
}

pub fn position_accuracy(predictions: &[TokenSpan], golds: &[TokenSpan]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            what: "position_accuracy spans",
            left: predictions.len(),
            right: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("position_accuracy needs at least one span"));
    }
    let hits: f64 = predictions
        .iter()
        .zip(golds)
        .map(|(p, g)| ((p.start == g.start) as u8 + (p.end == g.end) as u8) as f64 / 2.0)
        .sum();
    Ok(hits / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub f1: f64,
    pub em: f64,
    /// Predicted and gold token spans, when the prediction came from a model.
    #[serde(skip)]
    pub positions: Option<(TokenSpan, TokenSpan)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub exact_match: f64,
    pub position_accuracy: Option<f64>,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub no_answer_counts: BTreeMap<String, usize>,
    pub metric_note: String,
    #[serde(skip)]
    pub per_example: Vec<ExampleScore>,
}

impl EvalReport {
    /// `id,f1,em` rows with a header line.
    pub fn per_example_csv(&self) -> String {
        let mut out = String::from("id,f1,em\n");
        for s in &self.per_example {
            let _ = writeln!(out, "{},{},{}", csv_field(&s.id), s.f1, s.em);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Macro-average per-example scores. Position accuracy is reported only when
/// every scored example carries token positions.
pub fn aggregate(
    per_example: Vec<ExampleScore>,
    n_skipped: usize,
    no_answer_counts: BTreeMap<String, usize>,
    metric_note: impl Into<String>,
) -> EvalReport {
    let n = per_example.len();
    let (f1, exact_match) = if n == 0 {
        (0.0, 0.0)
    } else {
        let f1 = per_example.iter().map(|s| s.f1).sum::<f64>() / n as f64;
        let em = per_example.iter().map(|s| s.em).sum::<f64>() / n as f64;
        (f1, em)
    };
    let position_accuracy = if n > 0 && per_example.iter().all(|s| s.positions.is_some()) {
        let (preds, golds): (Vec<TokenSpan>, Vec<TokenSpan>) = per_example.iter().filter_map(|s| s.positions).unzip();
        position_accuracy(&preds, &golds).ok()
    } else {
        None
    };
    EvalReport {
        f1,
        exact_match,
        position_accuracy,
        n_scored: n,
        n_skipped,
        no_answer_counts,
        metric_note: metric_note.into(),
        per_example,
    }
}
