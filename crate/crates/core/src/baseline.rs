//! Rule-based baseline: answer with the context sentence that shares the most
//! unique words with the question. Ties go to the earliest sentence.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::QaExample;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, score_against_golds, EvalReport, ExampleScore, BASELINE_ACCURACY_NOTE};
use crate::stats::word_set;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Split after `.`, `!` or `?` when followed by whitespace or end of text.
/// Surrounding whitespace is trimmed from each sentence; offsets are
/// character positions in `context`.
pub fn split_sentences(context: &str) -> Vec<Sentence> {
    let chars: Vec<char> = context.chars().collect();
    let mut out = Vec::new();
    let mut seg_start = 0;
    let mut push = |lo: usize, hi: usize| {
        let mut lo = lo;
        let mut hi = hi;
        while lo < hi && chars[lo].is_whitespace() {
            lo += 1;
        }
        while hi > lo && chars[hi - 1].is_whitespace() {
            hi -= 1;
        }
        if lo < hi {
            out.push(Sentence {
                text: chars[lo..hi].iter().collect(),
                char_start: lo,
                char_end: hi,
            });
        }
    };
    for i in 0..chars.len() {
        let terminal = matches!(chars[i], '.' | '!' | '?');
        let boundary = chars.get(i + 1).is_none_or(|c| c.is_whitespace());
        if terminal && boundary {
            push(seg_start, i + 1);
            seg_start = i + 1;
        }
    }
    push(seg_start, chars.len());
    out
}

/// `(answer text, char_start)` of the best-overlapping sentence.
pub fn baseline_answer(question: &str, context: &str) -> Result<(String, usize)> {
    let sentences = split_sentences(context);
    if sentences.is_empty() {
        return Err(Error::EmptyInput("baseline needs a non-empty context"));
    }
    let q = word_set(question);
    let mut best = 0;
    let mut best_score = 0;
    for (i, s) in sentences.iter().enumerate() {
        let words = word_set(&s.text);
        let score = q.iter().filter(|w| words.contains(*w)).count();
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    let s = &sentences[best];
    Ok((s.text.clone(), s.char_start))
}

fn score_prediction(ex: &QaExample, prediction: &str) -> ExampleScore {
    let golds: Vec<&str> = ex.answers.iter().map(|a| a.text.as_str()).collect();
    let (f1, em) = score_against_golds(prediction, &golds);
    ExampleScore {
        id: ex.id.clone(),
        f1,
        em,
        positions: None,
    }
}

pub fn baseline_eval(examples: &[QaExample], jobs: usize) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("baseline_eval needs at least one example"));
    }
    let run = |ex: &QaExample| -> Result<ExampleScore> {
        let (text, _) = baseline_answer(&ex.question, &ex.context)?;
        Ok(score_prediction(ex, &text))
    };
    let scores: Result<Vec<ExampleScore>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| examples.par_iter().map(run).collect())
    } else {
        examples.iter().map(run).collect()
    };
    Ok(aggregate(scores?, 0, BTreeMap::new(), BASELINE_ACCURACY_NOTE))
}

/// Same candidates as the baseline, chosen uniformly at random. Used as a
/// dominance reference.
pub fn random_sentence_eval(examples: &[QaExample], seed: u64) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("random_sentence_eval needs at least one example"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(examples.len());
    for ex in examples {
        let sentences = split_sentences(&ex.context);
        if sentences.is_empty() {
            return Err(Error::EmptyInput("baseline needs a non-empty context"));
        }
        let pick = &sentences[rng.gen_range(0..sentences.len())];
        scores.push(score_prediction(ex, &pick.text));
    }
    Ok(aggregate(scores, 0, BTreeMap::new(), BASELINE_ACCURACY_NOTE))
}
