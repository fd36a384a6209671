//! Per-question latency harness.
//!
//! Each question runs through encode → forward → decode once, timed with an
//! injected [`Clock`]. Warm-up passes on the first question are untimed.
//! Percentiles use the nearest-rank rule. Loading weights and the vocabulary
//! happens outside the timed region; callers can record it in `load_s`.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::decode::{decode, Constraint, DecodeMode, SpanPrediction};
use crate::error::{Error, Result};
use crate::model::{forward, ModelWeights, SpanLogits};
use crate::wordpiece::{encode_pair, Encoding, Vocab};

/// Monotonic time source. Readings are offsets from an arbitrary origin.
pub trait Clock {
    fn now(&mut self) -> Duration;
}

pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> Duration {
        self.origin.elapsed()
    }
}

/// Replays a fixed sequence of readings. Panics when exhausted.
#[derive(Debug, Clone)]
pub struct FakeClock {
    readings: Vec<Duration>,
    next: usize,
}

impl FakeClock {
    pub fn new(readings: Vec<Duration>) -> Self {
        FakeClock { readings, next: 0 }
    }

    /// Readings that make each timed question take exactly the given
    /// duration, split evenly across the three phases (remainder to decode).
    pub fn for_question_durations(durations: &[Duration]) -> Self {
        let mut t = Duration::ZERO;
        let mut readings = Vec::with_capacity(durations.len() * 4);
        for &d in durations {
            let third = d / 3;
            readings.push(t);
            readings.push(t + third);
            readings.push(t + third * 2);
            t += d;
            readings.push(t);
        }
        FakeClock::new(readings)
    }

    pub fn remaining(&self) -> usize {
        self.readings.len() - self.next
    }
}

impl Clock for FakeClock {
    fn now(&mut self) -> Duration {
        let r = *self.readings.get(self.next).expect("fake clock ran out of readings");
        self.next += 1;
        r
    }
}

/// The three timed phases of answering one question.
pub trait Stages {
    type Encoded;
    type Logits;
    type Output;

    fn encode(&self, question: &str, context: &str) -> Result<Self::Encoded>;
    fn forward(&self, encoded: &Self::Encoded) -> Result<Self::Logits>;
    fn decode(&self, encoded: &Self::Encoded, logits: &Self::Logits) -> Result<Self::Output>;

    fn run(&self, question: &str, context: &str) -> Result<Self::Output> {
        let enc = self.encode(question, context)?;
        let logits = self.forward(&enc)?;
        self.decode(&enc, &logits)
    }
}

/// Encoder inference with span decoding, as used by `infer` and `bench`.
pub struct ModelPipeline<'a> {
    pub vocab: &'a Vocab,
    pub weights: &'a ModelWeights,
    pub max_length: usize,
    pub mode: DecodeMode,
    pub constraint: Constraint,
}

impl Stages for ModelPipeline<'_> {
    type Encoded = Encoding;
    type Logits = SpanLogits;
    type Output = SpanPrediction;

    fn encode(&self, question: &str, context: &str) -> Result<Encoding> {
        encode_pair(question, context, self.vocab, self.max_length)
    }

    fn forward(&self, encoded: &Encoding) -> Result<SpanLogits> {
        forward(encoded, self.weights)
    }

    fn decode(&self, encoded: &Encoding, logits: &SpanLogits) -> Result<SpanPrediction> {
        decode(logits, encoded, self.mode, self.constraint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMeans {
    pub encode_s: f64,
    pub forward_s: f64,
    pub decode_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub n_questions: usize,
    pub warmup_runs: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub per_question_s: Vec<f64>,
    pub phase_mean_s: PhaseMeans,
    pub load_s: Option<f64>,
    pub hardware_note: String,
}

/// Element at index `ceil(p/100 · n) − 1` of an ascending slice.
pub fn nearest_rank_percentile<T: Copy>(sorted: &[T], p: f64) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("percentile of an empty list"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p} is outside (0, 100]")));
    }
    let n = sorted.len();
    let rank = (p / 100.0 * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

fn mean_duration(ds: &[Duration]) -> Duration {
    let total: u128 = ds.iter().map(Duration::as_nanos).sum();
    let mean = total / ds.len() as u128;
    Duration::from_nanos(mean as u64)
}

/// Time every `(question, context)` pair once after `warmup` untimed runs of
/// the first pair. Stage outputs are returned alongside the report.
pub fn time_inference<S: Stages>(
    questions: &[(String, String)],
    stages: &S,
    warmup: usize,
    clock: &mut dyn Clock,
    hardware_note: impl Into<String>,
) -> Result<(LatencyReport, Vec<S::Output>)> {
    let Some((q0, c0)) = questions.first() else {
        return Err(Error::EmptyInput("bench needs at least one question"));
    };
    for _ in 0..warmup {
        stages.run(q0, c0)?;
    }

    let mut totals = Vec::with_capacity(questions.len());
    let mut phases = [Vec::new(), Vec::new(), Vec::new()];
    let mut outputs = Vec::with_capacity(questions.len());
    for (q, c) in questions {
        let t0 = clock.now();
        let enc = stages.encode(q, c)?;
        let t1 = clock.now();
        let logits = stages.forward(&enc)?;
        let t2 = clock.now();
        let out = stages.decode(&enc, &logits)?;
        let t3 = clock.now();
        phases[0].push(t1.saturating_sub(t0));
        phases[1].push(t2.saturating_sub(t1));
        phases[2].push(t3.saturating_sub(t2));
        totals.push(t3.saturating_sub(t0));
        outputs.push(out);
    }

    let mut sorted = totals.clone();
    sorted.sort();
    let secs = |d: Duration| d.as_secs_f64();
    let report = LatencyReport {
        n_questions: questions.len(),
        warmup_runs: warmup,
        mean_s: secs(mean_duration(&totals)),
        p50_s: secs(nearest_rank_percentile(&sorted, 50.0)?),
        p95_s: secs(nearest_rank_percentile(&sorted, 95.0)?),
        min_s: secs(sorted[0]),
        max_s: secs(sorted[sorted.len() - 1]),
        per_question_s: totals.iter().copied().map(secs).collect(),
        phase_mean_s: PhaseMeans {
            encode_s: secs(mean_duration(&phases[0])),
            forward_s: secs(mean_duration(&phases[1])),
            decode_s: secs(mean_duration(&phases[2])),
        },
        load_s: None,
        hardware_note: hardware_note.into(),
    };
    Ok((report, outputs))
}
