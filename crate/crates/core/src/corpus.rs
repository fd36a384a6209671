//! SQuAD v1.1 parsing and the flattened [`QaExample`] record.
//!
//! The official files nest `data[] → paragraphs[] → qas[] → answers[]`. We
//! flatten that into one record per question, derive each answer's exclusive
//! end offset and drop (but count) any question whose `answer_start` does not
//! point at its answer text. Offsets are Unicode scalar values, the same unit
//! SQuAD uses for `answer_start`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::{byte_index, char_len};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnswer {
    pub text: String,
    pub char_start: usize,
    /// Exclusive; always `char_start + text.chars().count()`.
    pub char_end: usize,
}

impl GoldAnswer {
    pub fn new(text: impl Into<String>, char_start: usize) -> Self {
        let text = text.into();
        let char_end = char_start + char_len(&text);
        GoldAnswer {
            text,
            char_start,
            char_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaExample {
    pub id: String,
    pub title: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<GoldAnswer>,
}

impl QaExample {
    pub fn is_valid(&self) -> bool {
        !self.answers.is_empty() && self.answers.iter().all(|a| validate_example(&self.context, a))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n_articles: usize,
    pub n_paragraphs: usize,
    /// Valid examples returned; `n_examples + n_invalid` is the raw question count.
    pub n_examples: usize,
    pub n_invalid: usize,
}

/// True iff `context[char_start..char_end)` is exactly `answer.text`.
pub fn validate_example(context: &str, answer: &GoldAnswer) -> bool {
    if answer.char_end != answer.char_start + char_len(&answer.text) {
        return false;
    }
    match byte_index(context, answer.char_start) {
        Some(b) => context[b..].starts_with(answer.text.as_str()),
        None => false,
    }
}

pub fn parse_squad(path: impl AsRef<Path>) -> Result<(Vec<QaExample>, CorpusSummary)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_squad_bytes(&bytes)
}

pub fn parse_squad_bytes(bytes: &[u8]) -> Result<(Vec<QaExample>, CorpusSummary)> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| Error::from_json(&e, bytes))?;
    let data = array_field(&root, "data", "")?;

    let mut out = Vec::new();
    let mut summary = CorpusSummary {
        n_articles: data.len(),
        ..Default::default()
    };

    for (ai, article) in data.iter().enumerate() {
        let apath = format!("data[{ai}]");
        let title = str_field(article, "title", &apath)?;
        let paragraphs = array_field(article, "paragraphs", &apath)?;
        summary.n_paragraphs += paragraphs.len();

        for (pi, paragraph) in paragraphs.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{pi}]");
            let context = str_field(paragraph, "context", &ppath)?;
            let qas = array_field(paragraph, "qas", &ppath)?;

            for (qi, qa) in qas.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                if qa.get("is_impossible").is_some() {
                    return Err(Error::UnsupportedVersion {
                        path: format!("{qpath}.is_impossible"),
                    });
                }
                let id = str_field(qa, "id", &qpath)?;
                let question = str_field(qa, "question", &qpath)?;
                let raw_answers = array_field(qa, "answers", &qpath)?;

                let mut answers = Vec::with_capacity(raw_answers.len());
                for (xi, ans) in raw_answers.iter().enumerate() {
                    let xpath = format!("{qpath}.answers[{xi}]");
                    let text = str_field(ans, "text", &xpath)?;
                    let start = ans
                        .get("answer_start")
                        .ok_or_else(|| Error::schema(format!("{xpath}.answer_start"), "missing"))?
                        .as_u64()
                        .ok_or_else(|| {
                            Error::schema(format!("{xpath}.answer_start"), "expected a non-negative integer")
                        })?;
                    answers.push(GoldAnswer::new(text, start as usize));
                }

                let example = QaExample {
                    id: id.to_owned(),
                    title: title.to_owned(),
                    context: context.to_owned(),
                    question: question.to_owned(),
                    answers,
                };
                if example.is_valid() {
                    out.push(example);
                } else {
                    summary.n_invalid += 1;
                }
            }
        }
    }
    summary.n_examples = out.len();
    Ok((out, summary))
}

fn field<'a>(v: &'a Value, key: &str, parent: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::schema(join_path(parent, key), "missing required field"))
}

fn str_field<'a>(v: &'a Value, key: &str, parent: &str) -> Result<&'a str> {
    field(v, key, parent)?
        .as_str()
        .ok_or_else(|| Error::schema(join_path(parent, key), "expected a string"))
}

fn array_field<'a>(v: &'a Value, key: &str, parent: &str) -> Result<&'a Vec<Value>> {
    field(v, key, parent)?
        .as_array()
        .ok_or_else(|| Error::schema(join_path(parent, key), "expected an array"))
}

fn join_path(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_owned()
    } else {
        format!("{parent}.{key}")
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlAnswer {
    text: String,
    answer_start: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonlExample {
    id: String,
    title: String,
    context: String,
    question: String,
    answers: Vec<JsonlAnswer>,
}

impl From<&QaExample> for JsonlExample {
    fn from(ex: &QaExample) -> Self {
        JsonlExample {
            id: ex.id.clone(),
            title: ex.title.clone(),
            context: ex.context.clone(),
            question: ex.question.clone(),
            answers: ex
                .answers
                .iter()
                .map(|a| JsonlAnswer {
                    text: a.text.clone(),
                    answer_start: a.char_start,
                })
                .collect(),
        }
    }
}

/// Write examples as JSON Lines, one object per example.
pub fn write_examples(examples: &[QaExample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_examples_to(examples, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_examples_to<W: Write>(examples: &[QaExample], w: &mut W) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut *w, &JsonlExample::from(ex))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Inverse of [`write_examples`]. Blank lines are ignored; records failing the
/// substring check are rejected with a schema error naming the line.
pub fn parse_jsonl(path: impl AsRef<Path>) -> Result<Vec<QaExample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl_bytes(&bytes)
}

pub fn parse_jsonl_bytes(bytes: &[u8]) -> Result<Vec<QaExample>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (lineno, line) in bytes.split(|b| *b == b'\n').enumerate() {
        let line_start = offset;
        offset += line.len() + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec: JsonlExample = serde_json::from_slice(line).map_err(|e| {
            let mut err = Error::from_json(&e, line);
            if let Error::Json {
                byte_offset, line: l, ..
            } = &mut err
            {
                *byte_offset += line_start;
                *l = lineno + 1;
            }
            err
        })?;
        let ex = QaExample {
            id: rec.id,
            title: rec.title,
            context: rec.context,
            question: rec.question,
            answers: rec
                .answers
                .into_iter()
                .map(|a| GoldAnswer::new(a.text, a.answer_start))
                .collect(),
        };
        if !ex.is_valid() {
            return Err(Error::schema(
                format!("line {}", lineno + 1),
                format!("example `{}` has no answers or an answer off its offset", ex.id),
            ));
        }
        out.push(ex);
    }
    Ok(out)
}

/// Load a dataset from either official SQuAD JSON or JSON Lines (by extension).
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Vec<QaExample>, CorpusSummary)> {
    let path = path.as_ref();
    let is_jsonl = path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("jsonl"));
    if is_jsonl {
        let examples = parse_jsonl(path)?;
        let summary = CorpusSummary {
            n_examples: examples.len(),
            ..Default::default()
        };
        Ok((examples, summary))
    } else {
        parse_squad(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(answer_start: usize) -> String {
        format!(
            r#"{{"version":"1.1","data":[{{"title":"T","paragraphs":[{{"context":"the sky is blue","qas":[{{"id":"q1","question":"what colour is the sky?","answers":[{{"text":"blue","answer_start":{answer_start}}}]}}]}}]}}]}}"#
        )
    }

    #[test]
    fn minimal_document_parses() {
        let (examples, summary) = parse_squad_bytes(doc(11).as_bytes()).unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(summary.n_invalid, 0);
        assert_eq!(summary.n_articles, 1);
        assert_eq!(summary.n_paragraphs, 1);
        assert_eq!(examples[0].answers[0].char_end, 15);
    }

    #[test]
    fn wrong_offset_is_counted_not_fatal() {
        let (examples, summary) = parse_squad_bytes(doc(10).as_bytes()).unwrap();
        assert!(examples.is_empty());
        assert_eq!(summary.n_invalid, 1);
        assert_eq!(summary.n_examples, 0);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_example("the sky is blue", &GoldAnswer::new("blue", 11)));
        assert!(!validate_example("the sky is blue", &GoldAnswer::new("blue", 10)));
        assert!(!validate_example("ab", &GoldAnswer::new("abc", 0)));
        assert!(!validate_example("ab", &GoldAnswer::new("b", 7)));
    }

    #[test]
    fn offsets_count_scalar_values() {
        // "é" is two bytes but one offset unit.
        let ctx = "Le café est noir";
        assert!(validate_example(ctx, &GoldAnswer::new("est", 8)));
        assert!(!validate_example(ctx, &GoldAnswer::new("est", 9)));
    }

    #[test]
    fn malformed_json_reports_byte_position() {
        let input = b"{\"data\": [\n  {\"title\": }\n]}";
        match parse_squad_bytes(input) {
            Err(Error::Json { byte_offset, line, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(input[byte_offset], b'}');
            }
            other => panic!("expected JSON error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_the_path() {
        let input = br#"{"data":[{"title":"T","paragraphs":[{"context":"c","qas":[{"id":"x","answers":[]}]}]}]}"#;
        match parse_squad_bytes(input) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "data[0].paragraphs[0].qas[0].question"),
            other => panic!("expected schema error, got {other:?}"),
        }
        match parse_squad_bytes(br#"{"version":"1.1"}"#) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "data"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn v2_is_rejected() {
        let input = br#"{"data":[{"title":"T","paragraphs":[{"context":"c","qas":[{"id":"x","question":"q","answers":[],"is_impossible":true}]}]}]}"#;
        assert!(matches!(
            parse_squad_bytes(input),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.jsonl");
        write_examples(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(parse_jsonl(&path).unwrap().is_empty());

        let ctx = "Le café de Paris est célèbre.".to_owned();
        let ex = QaExample {
            id: "a".into(),
            title: "Café".into(),
            context: ctx.clone(),
            question: "Quel café ?".into(),
            answers: vec![GoldAnswer::new("Paris", 11), GoldAnswer::new("célèbre", 21)],
        };
        assert!(ex.is_valid());
        write_examples(std::slice::from_ref(&ex), &path).unwrap();
        let back = parse_jsonl(&path).unwrap();
        assert_eq!(back, vec![ex]);
        assert_eq!(back[0].answers[0].char_start, 11);
    }
}
