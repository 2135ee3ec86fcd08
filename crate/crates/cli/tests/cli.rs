use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coref_core::{to_json, AnnotationTask, Corpus, Document, MentionSpan, Session, SessionConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn coref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coref")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn put(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One document, one mention per token, clusters given by CoNLL marks.
fn conll(marks: &[&str]) -> String {
    let mut out = String::from("#begin document (d); part 000\n");
    for (i, m) in marks.iter().enumerate() {
        out.push_str(&format!("d\t0\t{i}\tw{i}\t{m}\n"));
    }
    out.push_str("\n#end document\n");
    out
}

#[test]
fn convert_round_trip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let json_path = dir.path().join("boa.json");
    let back = dir.path().join("boa.conll");
    let out = coref(&["convert", s(&fixture("review_boa.conll")), s(&json_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = coref(&["--quiet", "convert", s(&json_path), s(&back)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).is_empty());
    assert_eq!(fs::read_to_string(back).unwrap(), fs::read_to_string(fixture("review_boa.conll")).unwrap());
}

#[test]
fn convert_reports_nested_mention_line() {
    let dir = TempDir::new().unwrap();
    let bad = put(&dir, "nested.conll", &conll(&["(0", "(1)", "0)"]));
    let out = coref(&["convert", &bad, s(&dir.path().join("out.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("overlapping mentions at line 3"), "{}", stderr(&out));
    assert!(!dir.path().join("out.json").exists());
}

#[test]
fn convert_refuses_pending_mentions_for_conll() {
    let corpus = Corpus::new(vec![Document::from_text("d", "she said she left")]).unwrap();
    let task = AnnotationTask {
        corpus,
        mentions: vec![MentionSpan::single(0, 0), MentionSpan::single(0, 2)],
    };
    let state = task.start().unwrap();
    let dir = TempDir::new().unwrap();
    let input = put(&dir, "partial.json", &to_json(&state));
    let out = coref(&["convert", &input, s(&dir.path().join("out.conll"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("pending"), "{}", stderr(&out));
    let out = coref(&["convert", &input, s(&dir.path().join("copy.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn score_identity_and_hand_example() {
    let out = coref(&["score", s(&fixture("review_boa.conll")), s(&fixture("review_boa.conll"))]);
    assert_eq!(out.status.code(), Some(0));
    let table = stdout(&out);
    assert_eq!(table.matches("100.0").count(), 10, "{table}");

    let dir = TempDir::new().unwrap();
    let key = put(&dir, "key.conll", &conll(&["(0)", "(0)", "(0)"]));
    let response = put(&dir, "response.conll", &conll(&["(0)", "(0)", "(1)"]));
    let out = coref(&["score", &key, &response]);
    let muc = stdout(&out).lines().find(|l| l.starts_with("MUC")).unwrap().to_string();
    assert_eq!(muc.split_whitespace().collect::<Vec<_>>(), ["MUC", "100.0", "50.0", "66.7"]);

    let out = coref(&["--json", "score", &key, &response]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["muc"]["f1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(report["conll_f1"].is_number());
}

#[test]
fn score_mismatch_exits_2_and_lists_mentions() {
    let dir = TempDir::new().unwrap();
    let key = put(&dir, "key.conll", &conll(&["(0)", "(0)", "-"]));
    let response = put(&dir, "response.conll", &conll(&["(0)", "-", "(0)"]));
    let out = coref(&["score", &key, &response]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("(doc 0, 1..1)") && err.contains("(doc 0, 2..2)"), "{err}");
}

#[test]
fn simulate_review_prints_the_worked_example() {
    let dir = TempDir::new().unwrap();
    let reviewed = dir.path().join("reviewed.conll");
    let out = coref(&[
        "--json",
        "simulate-review",
        s(&fixture("review_boa.conll")),
        s(&fixture("review_boa_script.json")),
        "-o",
        s(&reviewed),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    let rows: Vec<(String, usize)> = trace
        .iter()
        .map(|r| (r["row"].as_str().unwrap().to_string(), r["candidates"].as_array().map_or(0, Vec::len)))
        .collect();
    let want = [("assign", 0), ("span", 0), ("assign", 1), ("assign", 2), ("assign", 2)];
    assert_eq!(rows, want.map(|(r, n)| (r.to_string(), n)));
    assert_eq!(trace[1]["change"], "split");
    assert_eq!(trace[4]["cluster"]["mentions"], json!(["Bank of America", "bank", "BoA"]));
    let text = fs::read_to_string(reviewed).unwrap();
    assert!(text.contains("\tAmerican\t(1)\n") && text.contains("\tbank\t(0)\n"), "{text}");
}

#[test]
fn simulate_review_identity_script_shows_one_candidate() {
    let dir = TempDir::new().unwrap();
    let original = put(&dir, "o.conll", &conll(&["(0)", "(1)", "(0)", "-", "(1)", "(0)", "(2)"]));
    let script = put(
        &dir,
        "s.json",
        r#"[{"span":"accept","cluster":"new"},{"span":"accept","cluster":"new"},
            {"span":"accept","cluster":{"candidate_index":0}},{"span":"accept","cluster":{"candidate_index":0}},
            {"span":"accept","cluster":{"candidate_index":0}},{"span":"accept","cluster":"new"}]"#,
    );
    let out = coref(&["--json", "simulate-review", &original, &script]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    let sizes: Vec<usize> = trace.iter().map(|r| r["candidates"].as_array().unwrap().len()).collect();
    assert_eq!(sizes, [0, 0, 1, 1, 1, 0]);
}

#[test]
fn simulate_review_names_the_failing_step() {
    let dir = TempDir::new().unwrap();
    let script = put(
        &dir,
        "bad.json",
        r#"[{"span":"accept","cluster":"new"},{"span":"accept","cluster":{"candidate_index":3}}]"#,
    );
    let out = coref(&["simulate-review", s(&fixture("review_boa.conll")), &script]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("script step 1: candidate index 3 out of range"), "{}", stderr(&out));
}

fn live_session() -> (String, Session) {
    let config = fs::read_to_string(fixture("annotate_task.json")).unwrap();
    let mut session = Session::open_json(&config).unwrap();
    for (op, params) in [
        ("assign", json!({"cluster": "c0"})),
        ("assign_new", json!({})),
        ("assign", json!({"cluster": "c1"})),
        ("fix", json!({"start": 9, "end": 9})),
        ("assign", json!({"cluster": "c0"})),
    ] {
        let seq = session.version() + 1;
        let _ = session.apply(seq, op, params.as_object().unwrap());
    }
    assert!(session.version() >= 3);
    (config, session)
}

#[test]
fn replay_reproduces_live_snapshot() {
    let (config, session) = live_session();
    let dir = TempDir::new().unwrap();
    let config_path = put(&dir, "config.json", &config);
    let log_path = put(&dir, "log.jsonl", &coref_core::session::write_log(session.log()));
    let snap_path = put(&dir, "snap.json", &session.snapshot());

    let out = coref(&["replay", &config_path, &log_path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), session.snapshot());

    let out = coref(&["replay", &config_path, &log_path, "--verify", &snap_path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let empty = put(&dir, "empty.jsonl", "");
    let out = coref(&["replay", &config_path, &empty]);
    let fresh = Session::open(SessionConfig::parse(&config).unwrap()).unwrap();
    assert_eq!(stdout(&out), fresh.snapshot());
    let out = coref(&["replay", &config_path, &empty, "--verify", &snap_path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("diverges"));
}

#[test]
fn replay_reports_illegal_action_seq() {
    let dir = TempDir::new().unwrap();
    let config = put(&dir, "config.json", &fs::read_to_string(fixture("annotate_task.json")).unwrap());
    let log = put(
        &dir,
        "log.jsonl",
        "{\"op\":\"assign_new\",\"seq\":1}\n{\"cluster\":\"c7\",\"op\":\"assign\",\"seq\":2}\n",
    );
    let out = coref(&["replay", &config, &log]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("seq 2"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());

    let gap = put(&dir, "gap.jsonl", "{\"op\":\"assign_new\",\"seq\":2}\n");
    let out = coref(&["replay", &config, &gap]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("seq 2"), "{}", stderr(&out));
}

#[test]
fn extract_mentions_by_tag() {
    let corpus = fixture("shooting_tagged.json");
    let out = coref(&["extract-mentions", s(&corpus), "--pos-set", "NOUN,VERB"]);
    assert_eq!(out.status.code(), Some(0));
    let spans: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    let starts: Vec<u64> = spans.iter().map(|s| s["start"].as_u64().unwrap()).collect();
    assert!(starts.contains(&1) && starts.contains(&2), "gunman and shot: {starts:?}");
    assert!(!starts.contains(&0) && !starts.contains(&13));

    let out = coref(&["extract-mentions", s(&corpus), "--pos-set", ""]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(serde_json::from_str::<Value>(&stdout(&out)).unwrap(), json!([]));

    let out = coref(&["extract-mentions", s(&corpus), "--task"]);
    let task: AnnotationTask = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(task.mentions.len(), 9);
}

#[test]
fn extract_mentions_names_untagged_token() {
    let mut corpus: Value = serde_json::from_str(&fs::read_to_string(fixture("shooting_tagged.json")).unwrap()).unwrap();
    corpus["documents"][0]["tokens"][3].as_object_mut().unwrap().remove("pos");
    let dir = TempDir::new().unwrap();
    let path = put(&dir, "c.json", &corpus.to_string());
    let out = coref(&["extract-mentions", &path, "--pos-set", "NOUN"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("(0,3)"), "{}", stderr(&out));
}

#[test]
fn validate_detects_kinds_and_reports_paths() {
    for (name, kind) in [
        ("review_boa.conll", "conll"),
        ("review_boa_script.json", "script"),
        ("guided_naming.json", "config"),
        ("shooting_tagged.json", "corpus"),
    ] {
        let out = coref(&["--json", "validate", s(&fixture(name))]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["kind"], kind, "{name}");
    }

    let (_, session) = live_session();
    let dir = TempDir::new().unwrap();
    let snap = put(&dir, "snap.json", &session.snapshot());
    let out = coref(&["validate", &snap]);
    assert!(stdout(&out).starts_with("ok: snapshot"), "{}", stdout(&out));

    let mut config: Value = serde_json::from_str(&fs::read_to_string(fixture("annotate_task.json")).unwrap()).unwrap();
    config["task"]["mentions"][2]["start"] = json!("four");
    let bad = put(&dir, "bad.json", &config.to_string());
    let out = coref(&["--json", "validate", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("/task/mentions/2/start"), "{err}");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn missing_file_is_operational_error() {
    let out = coref(&["validate", "/nonexistent/file.conll"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("reading /nonexistent/file.conll"));
}
