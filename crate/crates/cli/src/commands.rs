use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use serde::Serialize;
use serde_json::{json, Value};

use qax_core::augment::{augment_corpus, AugmentConfig, SynonymLexicon};
use qax_core::baseline::{baseline_eval, random_sentence_eval};
use qax_core::bench::{time_inference, ModelPipeline, MonotonicClock, Stages};
use qax_core::corpus::write_examples;
use qax_core::decode::{eval_logits_file, Constraint, DecodeMode, LogitsEvalConfig, SpanPrediction};
use qax_core::model::{load_weights, ModelConfig, ModelWeights};
use qax_core::stats::eda_report;
use qax_core::wordpiece::{load_vocab, Vocab};
use qax_core::{load_dataset, QaExample};

use crate::args::*;

/// Shortest sequence any command accepts: room for specials and some text.
const MIN_MAX_LENGTH: usize = 16;

pub enum Failure {
    /// Bad flag values; exit 1.
    Usage(String),
    /// Unreadable, malformed or inconsistent inputs; exit 2.
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Eda(a) => eda(g, a),
        Command::Augment(a) => augment(g, a),
        Command::Baseline(a) => baseline(g, a),
        Command::EvalLogits(a) => eval_logits(g, a),
        Command::Infer(a) => infer(g, a),
        Command::Bench(a) => bench(g, a),
        Command::ValidateWeights(a) => validate_weights(g, a),
    }
}

// ------------------------------------------------------------------ output

/// Serialize `report` with a `command` tag and, unless suppressed, a
/// generation timestamp; write it to `--out` or stdout.
fn emit(g: &GlobalArgs, command: &str, report: &impl Serialize) -> Outcome {
    let mut value = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut value {
        map.insert("command".into(), json!(command));
        if !g.no_timestamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            map.insert("generated_unix_s".into(), json!(now));
        }
    }
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    match &g.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ----------------------------------------------------------------- helpers

fn dataset(path: &Path) -> Result<Vec<QaExample>, Failure> {
    let (examples, summary) = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    eprintln!(
        "{}: {} examples ({} invalid skipped)",
        path.display(),
        summary.n_examples,
        summary.n_invalid
    );
    Ok(examples)
}

fn vocab(path: Option<&Path>) -> Result<Vocab, Failure> {
    Ok(match path {
        Some(p) => load_vocab(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => Vocab::bundled_uncased(),
    })
}

fn config_path(weights: &Path, config: Option<&Path>) -> PathBuf {
    config
        .map(Path::to_path_buf)
        .unwrap_or_else(|| weights.with_extension("json"))
}

fn model(weights: &Path, config: Option<&Path>) -> Result<ModelWeights, Failure> {
    let cfg_path = config_path(weights, config);
    let cfg = ModelConfig::load(&cfg_path).with_context(|| format!("loading config {}", cfg_path.display()))?;
    Ok(load_weights(weights, cfg).with_context(|| format!("loading weights {}", weights.display()))?)
}

fn check_max_length(max_length: usize, max_positions: Option<usize>) -> Outcome {
    if max_length < MIN_MAX_LENGTH {
        return Err(usage(format!(
            "--max-length must be at least {MIN_MAX_LENGTH}, got {max_length}"
        )));
    }
    if let Some(limit) = max_positions {
        if max_length > limit {
            return Err(usage(format!(
                "--max-length {max_length} exceeds the model's {limit} positions"
            )));
        }
    }
    Ok(())
}

fn decode_settings(d: &DecodeArgs) -> (DecodeMode, Constraint) {
    let mode = match d.mode {
        ModeArg::Independent => DecodeMode::Independent,
        ModeArg::Joint => DecodeMode::Joint {
            max_answer_len: d.max_answer_len as usize,
        },
    };
    let constraint = match d.constraint {
        ConstraintArg::Context => Constraint::Context,
        ConstraintArg::ListingCompat => Constraint::ListingCompat,
    };
    (mode, constraint)
}

fn prediction_json(p: &SpanPrediction) -> Value {
    match p {
        SpanPrediction::Answer {
            text,
            token_start,
            token_end,
        } => json!({ "answer": text, "token_start": token_start, "token_end": token_end }),
        SpanPrediction::NoAnswer(reason) => json!({ "answer": null, "no_answer": reason.as_str() }),
    }
}

/// The config as JSON, with `layer_norm_eps` written at its f32 precision
/// (`1e-12`, not the widened `9.99…e-13`).
fn config_json(c: &ModelConfig) -> Result<Value, Failure> {
    let mut v = serde_json::to_value(c)?;
    let eps: f64 = c.layer_norm_eps.to_string().parse()?;
    v["layer_norm_eps"] = json!(eps);
    Ok(v)
}

// ---------------------------------------------------------------- commands

fn eda(g: &GlobalArgs, a: &EdaArgs) -> Outcome {
    let examples = dataset(&a.dataset)?;
    let report = eda_report(&examples, g.jobs as usize)?;
    if let Some(dir) = &a.csv_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let h = &report.length_histograms;
        for (name, hist) in [
            ("question_len", &h.question_len),
            ("context_len", &h.context_len),
            ("answer_len", &h.answer_len),
            ("answer_start_pos", &report.answer_start_pos),
            ("overlap", &report.overlap.histogram),
        ] {
            write_file(&dir.join(format!("{name}.csv")), &hist.to_csv())?;
        }
    }
    eprintln!(
        "question {:.2} / context {:.2} / answer {:.2} words on average; overlap {:.3}; corr {:.3}",
        report.question_len.mean,
        report.context_len.mean,
        report.answer_len.mean,
        report.overlap.stats.mean,
        report.context_answer_corr
    );
    emit(g, "eda", &report)
}

fn augment(g: &GlobalArgs, a: &AugmentArgs) -> Outcome {
    if !(a.multiplier >= 1.0 && a.multiplier.is_finite()) {
        return Err(usage(format!(
            "--multiplier must be a finite value >= 1, got {}",
            a.multiplier
        )));
    }
    if !(0.0..=1.0).contains(&a.p) {
        return Err(usage(format!("--p must lie in [0, 1], got {}", a.p)));
    }
    let examples = dataset(&a.dataset)?;
    let lexicon = match &a.lexicon {
        Some(p) => SynonymLexicon::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => SynonymLexicon::bundled(),
    };
    let config = AugmentConfig {
        p: a.p,
        questions: !a.no_questions,
        contexts: !a.no_contexts,
    };
    let corpus = augment_corpus(&examples, &lexicon, a.multiplier, g.seed, &config, g.jobs as usize)?;
    write_examples(&corpus.examples, &a.output_data).with_context(|| format!("writing {}", a.output_data.display()))?;
    if let Some(path) = &a.audit {
        let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for rec in &corpus.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let s = &corpus.summary;
    eprintln!(
        "{} original + {} added (target {}, shortfall {})",
        s.n_original, s.n_added, s.target, s.shortfall
    );
    emit(
        g,
        "augment",
        &json!({ "summary": s, "seed": g.seed, "p": a.p, "multiplier": a.multiplier, "lexicon_entries": lexicon.len() }),
    )
}

fn baseline(g: &GlobalArgs, a: &BaselineArgs) -> Outcome {
    let examples = dataset(&a.dataset)?;
    let report = baseline_eval(&examples, g.jobs as usize)?;
    if let Some(path) = &a.per_example {
        write_file(path, &report.per_example_csv())?;
    }
    eprintln!("baseline F1 {:.4}, EM {:.4}", report.f1, report.exact_match);
    if a.with_random {
        let random = random_sentence_eval(&examples, g.seed)?;
        eprintln!("random-sentence F1 {:.4}, EM {:.4}", random.f1, random.exact_match);
        return emit(g, "baseline", &json!({ "baseline": report, "random_sentence": random }));
    }
    emit(g, "baseline", &report)
}

fn eval_logits(g: &GlobalArgs, a: &EvalLogitsArgs) -> Outcome {
    check_max_length(a.max_length, None)?;
    let (mode, constraint) = decode_settings(&a.decode);
    let vocab = vocab(a.vocab.as_deref())?;
    let examples = dataset(&a.dataset)?;
    let cfg = LogitsEvalConfig {
        max_length: a.max_length,
        mode,
        constraint,
        jobs: g.jobs as usize,
    };
    let report = eval_logits_file(&examples, &a.logits, &vocab, &cfg)
        .with_context(|| format!("evaluating {}", a.logits.display()))?;
    if let Some(path) = &a.per_example {
        write_file(path, &report.per_example_csv())?;
    }
    eprintln!(
        "F1 {:.4}, EM {:.4} over {} examples ({} skipped)",
        report.f1, report.exact_match, report.n_scored, report.n_skipped
    );
    emit(g, "eval-logits", &report)
}

fn infer(g: &GlobalArgs, a: &InferArgs) -> Outcome {
    check_max_length(a.max_length, None)?;
    let (mode, constraint) = decode_settings(&a.decode);
    let vocab = vocab(a.model.vocab.as_deref())?;
    let weights = model(&a.model.weights, a.model.config.as_deref())?;
    check_max_length(a.max_length, Some(weights.config.max_positions))?;
    let pipeline = ModelPipeline {
        vocab: &vocab,
        weights: &weights,
        max_length: a.max_length,
        mode,
        constraint,
    };
    let prediction = pipeline.run(&a.question, &a.context)?;
    if a.json {
        return emit(g, "infer", &prediction_json(&prediction));
    }
    let line = match &prediction {
        SpanPrediction::Answer { text, .. } => text.clone(),
        SpanPrediction::NoAnswer(reason) => format!("[no answer: {}]", reason.as_str()),
    };
    let text = line + "\n";
    match &g.out {
        Some(path) => write_file(path, &text)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn bench(g: &GlobalArgs, a: &BenchArgs) -> Outcome {
    check_max_length(a.max_length, None)?;
    let (mode, constraint) = decode_settings(&a.decode);
    let vocab = vocab(a.model.vocab.as_deref())?;
    let examples = dataset(&a.dataset)?;
    let load_start = Instant::now();
    let weights = model(&a.model.weights, a.model.config.as_deref())?;
    let load_s = load_start.elapsed().as_secs_f64();
    check_max_length(a.max_length, Some(weights.config.max_positions))?;

    let questions: Vec<(String, String)> = examples
        .iter()
        .take(a.questions as usize)
        .map(|e| (e.question.clone(), e.context.clone()))
        .collect();
    if questions.len() < a.questions as usize {
        eprintln!("note: dataset has only {} questions", questions.len());
    }
    let pipeline = ModelPipeline {
        vocab: &vocab,
        weights: &weights,
        max_length: a.max_length,
        mode,
        constraint,
    };
    let (mut report, predictions) = time_inference(
        &questions,
        &pipeline,
        a.warmup,
        &mut MonotonicClock::new(),
        a.hardware_note.clone(),
    )?;
    report.load_s = Some(load_s);
    eprintln!(
        "{} questions: mean {:.4} s, p50 {:.4} s, p95 {:.4} s",
        report.n_questions, report.mean_s, report.p50_s, report.p95_s
    );
    let predictions: Vec<Value> = predictions.iter().map(prediction_json).collect();
    emit(
        g,
        "bench",
        &json!({ "latency": report, "max_length": a.max_length, "predictions": predictions }),
    )
}

fn validate_weights(g: &GlobalArgs, a: &ValidateArgs) -> Outcome {
    let cfg_path = config_path(&a.weights, a.config.as_deref());
    let outcome = ModelConfig::load(&cfg_path)
        .with_context(|| format!("loading config {}", cfg_path.display()))
        .and_then(|cfg| {
            load_weights(&a.weights, cfg).with_context(|| format!("loading weights {}", a.weights.display()))
        });
    match outcome {
        Ok(w) => {
            let c = w.config;
            eprintln!("ok: {} tensors, {} parameters", c.tensor_count(), c.parameter_count());
            emit(
                g,
                "validate-weights",
                &json!({
                    "ok": true,
                    "tensor_count": c.tensor_count(),
                    "parameter_count": c.parameter_count(),
                    "config": config_json(&c)?,
                }),
            )
        }
        Err(err) => {
            emit(
                g,
                "validate-weights",
                &json!({ "ok": false, "error": format!("{err:#}") }),
            )?;
            Err(Failure::Data(err))
        }
    }
}
