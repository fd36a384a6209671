use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use qax_core::corpus::{parse_squad, write_examples};

const QUESTION: &str = "Which NFL team represented the AFC at Super Bowl 50?";
const CONTEXT: &str = "The American Football Conference (AFC) champion Denver Broncos defeated the \
                       National Football Conference (NFC) champion Carolina Panthers 24–10.";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn qax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qax"))
        .args(args)
        .env_remove("QAX_SEED")
        .output()
        .expect("spawn qax")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// The three examples covered by the crafted logits files, as JSONL.
fn crafted_subset(dir: &Path) -> PathBuf {
    let (examples, _) = parse_squad(fixture("mini-squad.json")).unwrap();
    let subset: Vec<_> = examples
        .into_iter()
        .filter(|e| ["sb-1", "cf-1", "et-1"].contains(&e.id.as_str()))
        .collect();
    assert_eq!(subset.len(), 3);
    let path = dir.join("subset.jsonl");
    write_examples(&subset, &path).unwrap();
    path
}

fn toy_model_args() -> Vec<String> {
    vec![
        "--weights".into(),
        fixture("toy-weights.qaw").to_str().unwrap().into(),
        "--vocab".into(),
        fixture("toy-vocab.txt").to_str().unwrap().into(),
    ]
}

#[test]
fn eda_writes_report_and_histograms() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("stats.json");
    let csv_dir = dir.path().join("csv");
    let out = qax(&[
        "eda",
        p(&fixture("mini-squad.json")),
        "--out",
        p(&out_path),
        "--csv-dir",
        p(&csv_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_slice(&fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(report["command"], "eda");
    assert_eq!(report["n_examples"], 18);
    assert!(report["generated_unix_s"].is_u64());
    for name in [
        "question_len",
        "context_len",
        "answer_len",
        "answer_start_pos",
        "overlap",
    ] {
        let csv = fs::read_to_string(csv_dir.join(format!("{name}.csv"))).unwrap();
        assert!(csv.lines().count() > 1, "{name}");
    }
}

#[test]
fn identical_argv_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let data = fixture("mini-squad.json");
    let runs: Vec<Vec<&str>> = vec![
        vec!["eda", p(&data), "--no-timestamp"],
        vec!["baseline", p(&data), "--with-random", "--no-timestamp"],
        vec!["eda", p(&data), "--no-timestamp", "--jobs", "3"],
    ];
    for argv in &runs {
        let a = qax(argv);
        let b = qax(argv);
        assert!(a.status.success(), "{}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "{argv:?}");
    }
    // Parallel and serial EDA agree too.
    assert_eq!(qax(&runs[0]).stdout, qax(&runs[2]).stdout);

    let aug = |name: &str| {
        let data_out = dir.path().join(format!("{name}.jsonl"));
        let audit = dir.path().join(format!("{name}.audit.jsonl"));
        let out = qax(&[
            "augment",
            p(&data),
            "--output-data",
            p(&data_out),
            "--audit",
            p(&audit),
            "--no-timestamp",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (out.stdout, fs::read(data_out).unwrap(), fs::read(audit).unwrap())
    };
    assert_eq!(aug("first"), aug("second"));
}

#[test]
fn augment_output_matches_summary() {
    let dir = TempDir::new().unwrap();
    let data_out = dir.path().join("aug.jsonl");
    let out = qax(&[
        "augment",
        p(&fixture("mini-squad.json")),
        "--output-data",
        p(&data_out),
        "--no-timestamp",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    let s = &report["summary"];
    assert_eq!(report["seed"], 42);
    let lines = fs::read_to_string(&data_out).unwrap().lines().count() as u64;
    assert_eq!(
        lines,
        s["n_original"].as_u64().unwrap() + s["n_added"].as_u64().unwrap()
    );

    // The augmented JSONL is itself a valid dataset for the other commands.
    let eda = qax(&["eda", p(&data_out), "--no-timestamp"]);
    assert!(eda.status.success(), "{}", stderr(&eda));
    assert_eq!(stdout_json(&eda)["n_examples"].as_u64(), Some(lines));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let data_out = dir.path().join("aug.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_qax"))
        .args([
            "augment",
            p(&fixture("mini-squad.json")),
            "--output-data",
            p(&data_out),
            "--no-timestamp",
        ])
        .env("QAX_SEED", "1234")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["seed"], 1234);
}

#[test]
fn eval_logits_scores_crafted_file() {
    let dir = TempDir::new().unwrap();
    let subset = crafted_subset(dir.path());
    let per_example = dir.path().join("per.csv");
    for mode in ["independent", "joint"] {
        let out = qax(&[
            "eval-logits",
            p(&subset),
            "--logits",
            p(&fixture("crafted-logits-384.jsonl")),
            "--mode",
            mode,
            "--per-example",
            p(&per_example),
            "--no-timestamp",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let report = stdout_json(&out);
        assert_eq!(report["f1"], 1.0);
        assert_eq!(report["exact_match"], 1.0);
        assert_eq!(report["n_scored"], 3);
        assert_eq!(fs::read_to_string(&per_example).unwrap().lines().count(), 4);
    }
}

#[test]
fn eval_logits_fingerprint_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let subset = crafted_subset(dir.path());
    let out = qax(&[
        "eval-logits",
        p(&subset),
        "--logits",
        p(&fixture("crafted-logits-512.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fingerprint mismatch"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn eval_logits_missing_ids_exit_2() {
    let out = qax(&[
        "eval-logits",
        p(&fixture("mini-squad.json")),
        "--logits",
        p(&fixture("crafted-logits-384.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no record"), "{}", stderr(&out));
}

#[test]
fn infer_prints_one_answer_line() {
    let mut args: Vec<String> = vec!["infer".into()];
    args.extend(toy_model_args());
    args.extend(["--question".into(), QUESTION.into(), "--context".into(), CONTEXT.into()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();

    // The toy weights are random, so the independent decoder may abstain; it
    // must still print exactly one line.
    let out = qax(&argv);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1, "{text:?}");

    // The joint decoder always returns a span of the context.
    let mut joint = argv.clone();
    joint.extend(["--mode", "joint"]);
    let out = qax(&joint);
    assert!(out.status.success(), "{}", stderr(&out));
    let answer = String::from_utf8(out.stdout).unwrap();
    let answer = answer.trim_end_matches('\n');
    assert!(!answer.is_empty());
    assert!(CONTEXT.contains(answer), "{answer:?}");

    let mut as_json = joint.clone();
    as_json.extend(["--json", "--no-timestamp"]);
    let report = stdout_json(&qax(&as_json));
    assert_eq!(report["answer"], answer);
    assert!(report["token_start"].as_u64() <= report["token_end"].as_u64());
}

#[test]
fn infer_rejects_length_beyond_model_positions() {
    let mut args: Vec<String> = vec!["infer".into()];
    args.extend(toy_model_args());
    args.extend(["--question", "q?", "--context", "c.", "--max-length", "1024"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = qax(&argv);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("512 positions"), "{}", stderr(&out));
}

#[test]
fn validate_weights_accepts_fixture_and_rejects_truncation() {
    let out = qax(&[
        "validate-weights",
        "--weights",
        p(&fixture("toy-weights.qaw")),
        "--no-timestamp",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    assert_eq!(report["ok"], true);
    assert_eq!(report["tensor_count"], 4 + 16 * 2 + 2);
    assert_eq!(report["config"]["layer_norm_eps"], 1e-12);

    let dir = TempDir::new().unwrap();
    let bytes = fs::read(fixture("toy-weights.qaw")).unwrap();
    let cut = dir.path().join("cut.qaw");
    fs::write(&cut, &bytes[..bytes.len() - 40]).unwrap();
    let out = qax(&[
        "validate-weights",
        "--weights",
        p(&cut),
        "--config",
        p(&fixture("toy-weights.json")),
        "--no-timestamp",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report = stdout_json(&out);
    assert_eq!(report["ok"], false);
    assert!(report["error"].as_str().unwrap().contains("tensors"), "{report}");

    // Without --config, the sidecar next to the copy is looked up and is absent.
    let out = qax(&["validate-weights", "--weights", p(&cut)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cut.json"), "{}", stderr(&out));
}

#[test]
fn bench_reports_ordered_percentiles() {
    let mut args: Vec<String> = vec!["bench".into(), fixture("mini-squad.json").to_str().unwrap().into()];
    args.extend(toy_model_args());
    args.extend(["-n", "5", "--hardware-note", "test runner", "--no-timestamp"].map(String::from));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = qax(&argv);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout_json(&out);
    let l = &report["latency"];
    let f = |k: &str| l[k].as_f64().unwrap();
    assert_eq!(l["n_questions"], 5);
    assert_eq!(l["hardware_note"], "test runner");
    assert!(f("min_s") <= f("p50_s") && f("p50_s") <= f("p95_s") && f("p95_s") <= f("max_s"));
    assert!(f("load_s") >= 0.0);
    assert_eq!(report["predictions"].as_array().unwrap().len(), 5);
}

#[test]
fn usage_errors_exit_1() {
    let data = fixture("mini-squad.json");
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["frobnicate"],
        vec!["eda"],
        vec!["eda", p(&data), "--jobs", "0"],
        vec!["eval-logits", p(&data), "--logits", "x.jsonl", "--max-length", "8"],
        vec!["eval-logits", p(&data), "--logits", "x.jsonl", "--mode", "greedy"],
        vec!["augment", p(&data), "--output-data", "/dev/null", "--multiplier", "0.5"],
        vec!["augment", p(&data), "--output-data", "/dev/null", "--p", "1.5"],
    ];
    for argv in cases {
        let out = qax(&argv);
        assert_eq!(out.status.code(), Some(1), "{argv:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"version\": \"1.1\", \"data\": [").unwrap();
    for argv in [vec!["eda", "/nonexistent/dev.json"], vec!["baseline", p(&bad)]] {
        let out = qax(&argv);
        assert_eq!(out.status.code(), Some(2), "{argv:?}: {}", stderr(&out));
    }
}

/// Help text of one option: its line through the line before the next option
/// (option lines are indented at most six columns; value lists deeper).
fn option_block<'a>(help: &'a str, flag: &str) -> Vec<&'a str> {
    let is_option = |l: &str| {
        let body = l.trim_start();
        body.starts_with('-') && l.len() - body.len() <= 6
    };
    let lines: Vec<&str> = help.lines().collect();
    let at = lines
        .iter()
        .position(|l| is_option(l) && l.contains(flag))
        .unwrap_or_else(|| panic!("{flag} missing from:\n{help}"));
    let end = lines[at + 1..]
        .iter()
        .position(|l| is_option(l))
        .map_or(lines.len(), |n| at + 1 + n);
    lines[at..end].to_vec()
}

trait ContainsText {
    fn contains(&self, needle: &str) -> bool;
}

impl ContainsText for Vec<&str> {
    fn contains(&self, needle: &str) -> bool {
        self.iter().any(|l| l.contains(needle))
    }
}

#[test]
fn help_lists_defaults_for_every_subcommand() {
    let top = qax(&["--help"]);
    assert!(top.status.success());
    let top = String::from_utf8(top.stdout).unwrap();
    let subcommands = [
        "eda",
        "augment",
        "baseline",
        "eval-logits",
        "infer",
        "bench",
        "validate-weights",
    ];
    for sub in subcommands {
        assert!(top.contains(sub), "{sub}");
    }
    let expected: &[(&str, &[&str])] = &[
        ("eda", &[]),
        ("augment", &["--multiplier", "--p <P>", "--lexicon"]),
        ("baseline", &[]),
        (
            "eval-logits",
            &["--max-length", "--mode", "--max-answer-len", "--constraint", "--vocab"],
        ),
        (
            "infer",
            &["--max-length", "--mode", "--constraint", "--config", "--vocab"],
        ),
        (
            "bench",
            &["--questions", "--warmup", "--hardware-note", "--max-length", "--config"],
        ),
        ("validate-weights", &["--config"]),
    ];
    for (sub, flags) in expected {
        let out = qax(&[sub, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        for flag in flags.iter().chain(&["--seed", "--jobs"]) {
            assert!(option_block(&help, flag).contains("default"), "{sub} {flag}");
        }
    }
}
