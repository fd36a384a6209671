//! Corpus statistics: word-length distributions, normalized answer start
//! positions, question/context word overlap and the context-vs-answer length
//! correlation.
//!
//! A "word" is a lowercased maximal run of alphanumeric characters. Standard
//! deviations are population standard deviations.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QaExample;
use crate::error::{Error, Result};
use crate::text::char_len;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `bin_low,bin_high,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.bin_edges[i], self.bin_edges[i + 1], c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    #[serde(flatten)]
    pub stats: FieldStats,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistograms {
    pub question_len: Histogram,
    pub context_len: Histogram,
    pub answer_len: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub n_examples: usize,
    pub question_len: FieldStats,
    pub context_len: FieldStats,
    pub answer_len: FieldStats,
    pub answer_start_pos: Histogram,
    pub overlap: OverlapStats,
    pub context_answer_corr: f64,
    pub length_histograms: LengthHistograms,
}

pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

pub(crate) fn word_set(text: &str) -> HashSet<String> {
    word_tokens(text).into_iter().collect()
}

/// Fraction of the question's unique words that also occur in the context.
pub fn overlap_ratio(question: &str, context: &str) -> f64 {
    let q = word_set(question);
    if q.is_empty() {
        return 0.0;
    }
    let c = word_set(context);
    q.iter().filter(|w| c.contains(*w)).count() as f64 / q.len() as f64
}

pub fn field_stats(values: &[f64]) -> Result<FieldStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("field_stats needs at least one value"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    Ok(FieldStats {
        // Clamp away the last-ulp drift so `min <= mean <= max` holds exactly.
        mean: mean.clamp(min, max),
        std_dev: var.sqrt(),
        min,
        max,
        n: values.len(),
    })
}

/// Pearson correlation of two equally long series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "pearson series",
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptyInput("pearson needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Equal-width histogram over `[min, max]` of the data.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram needs at least one value"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    histogram_range(values, bins, lo, hi)
}

/// Equal-width histogram over a fixed `[lo, hi]`. Samples outside the range
/// are not counted; the last bin's right edge is inclusive. A degenerate
/// range (`lo == hi`) is widened by one unit so edges stay strictly increasing.
pub fn histogram_range(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs bins >= 1".into()));
    }
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidArgument(format!("bad histogram range [{lo}, {hi}]")));
    }
    let hi = if hi == lo { lo + 1.0 } else { hi };
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    bin_edges.push(hi);

    let mut counts = vec![0u64; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let mut idx = (((v - lo) / width) as usize).min(bins - 1);
        // Floating division can land one bin off near an edge.
        while idx > 0 && v < bin_edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= bin_edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

/// Unit-width histogram for integer-valued data: bins `[k, k+1)` for
/// `k = min..=max`.
fn integer_histogram(values: &[f64], stats: &FieldStats) -> Result<Histogram> {
    let bins = (stats.max - stats.min) as usize + 1;
    histogram_range(values, bins, stats.min, stats.max + 1.0)
}

struct ExampleMeasures {
    question_len: f64,
    context_len: f64,
    answer_len: f64,
    answer_start_pos: f64,
    overlap: f64,
}

fn measure(ex: &QaExample) -> ExampleMeasures {
    let answer = &ex.answers[0];
    let ctx_chars = char_len(&ex.context);
    ExampleMeasures {
        question_len: word_tokens(&ex.question).len() as f64,
        context_len: word_tokens(&ex.context).len() as f64,
        answer_len: word_tokens(&answer.text).len() as f64,
        answer_start_pos: if ctx_chars == 0 {
            0.0
        } else {
            answer.char_start as f64 / ctx_chars as f64
        },
        overlap: overlap_ratio(&ex.question, &ex.context),
    }
}

pub const POSITION_BINS: usize = 20;
pub const OVERLAP_BINS: usize = 20;

/// Corpus statistics over the first gold answer of each example.
///
/// Per-example measures may be computed on `jobs` threads; reductions always
/// run sequentially in input order so the report is identical for any `jobs`.
pub fn eda_report(examples: &[QaExample], jobs: usize) -> Result<EdaReport> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("eda_report needs at least one example"));
    }
    let measures: Vec<ExampleMeasures> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| examples.par_iter().map(measure).collect())
    } else {
        examples.iter().map(measure).collect()
    };

    let column = |f: fn(&ExampleMeasures) -> f64| measures.iter().map(f).collect::<Vec<f64>>();
    let q = column(|m| m.question_len);
    let c = column(|m| m.context_len);
    let a = column(|m| m.answer_len);
    let pos = column(|m| m.answer_start_pos);
    let ov = column(|m| m.overlap);

    let question_len = field_stats(&q)?;
    let context_len = field_stats(&c)?;
    let answer_len = field_stats(&a)?;
    let context_answer_corr = match pearson(&c, &a) {
        Ok(r) => r,
        Err(Error::UndefinedCorrelation | Error::EmptyInput(_)) => 0.0,
        Err(e) => return Err(e),
    };

    Ok(EdaReport {
        n_examples: examples.len(),
        question_len,
        context_len,
        answer_len,
        answer_start_pos: histogram_range(&pos, POSITION_BINS, 0.0, 1.0)?,
        overlap: OverlapStats {
            stats: field_stats(&ov)?,
            histogram: histogram_range(&ov, OVERLAP_BINS, 0.0, 1.0)?,
        },
        context_answer_corr,
        length_histograms: LengthHistograms {
            question_len: integer_histogram(&q, &question_len)?,
            context_len: integer_histogram(&c, &context_len)?,
            answer_len: integer_histogram(&a, &answer_len)?,
        },
    })
}
