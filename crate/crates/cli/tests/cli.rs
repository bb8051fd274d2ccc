use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn corpus() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

fn lis(file: &str) -> PathBuf {
    corpus().join("candidates/lis").join(file)
}

fn egca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egca")).args(args).env_remove("EGCA_LOCALIZER_URL").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&egca(&[])), 1);
    assert_eq!(code(&egca(&["frobnicate"])), 1);
    assert_eq!(code(&egca(&["trace"])), 1);
    assert_eq!(code(&egca(&["diff", "a.ml", "b.ml"])), 1);
    assert_eq!(code(&egca(&["--fuel", "0", "trace", p(&lis("buggy.ml")), "[1]"])), 1);
    assert_eq!(code(&egca(&["--jobs", "0", "report", "."])), 1);
    assert_eq!(code(&egca(&["sim"])), 1);
    assert_eq!(code(&egca(&["--help"])), 0);
    assert_eq!(code(&egca(&["--version"])), 0);
}

#[test]
fn trace_emits_wire_format() {
    let out = egca(&["trace", p(&lis("buggy.ml")), "[1,3,3,5]"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let last = lines.last().unwrap();
    assert_eq!(last["outcome"], "returned");
    assert_eq!(last["value"], 4);
    assert_eq!(lines[0]["k"], 1);
    assert!(lines[0]["block"].as_str().unwrap().starts_with('B'));
    assert_eq!(code(&egca(&["trace", "missing.ml", "[1]"])), 2);
    assert_eq!(code(&egca(&["trace", p(&lis("buggy.ml")), "not json"])), 2);
    assert_eq!(code(&egca(&["trace", p(&lis("syntax.ml")), "[1]"])), 2);
}

#[test]
fn diff_reports_the_dp_update() {
    let out = json(&egca(&["diff", p(&lis("buggy.ml")), p(&lis("correct.ml")), "[1,3,3,5]"]));
    assert_eq!(out["k_star"], 15);
    assert_eq!(out["context"]["i"], 2);
    assert_eq!(out["context"]["j"], 1);
    assert!(out["tokens"].as_str().unwrap().contains(">="));
    assert_eq!(out["alignment"], "static");
    let same = json(&egca(&["diff", p(&lis("correct.ml")), p(&lis("correct.ml")), "[1,3,3,5]"]));
    assert_eq!(same["k_star"], Value::Null);
    let pretty = egca(&["--pretty", "diff", p(&lis("buggy.ml")), p(&lis("correct.ml")), "[1,3,3,5]"]);
    assert!(stdout(&pretty).starts_with("divergence at event 15"));
    assert_eq!(code(&egca(&["diff", p(&lis("buggy.ml")), "missing.ml", "[1]"])), 2);
}

#[test]
fn diff_from_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (ct, rt) = (dir.path().join("c.jsonl"), dir.path().join("r.jsonl"));
    fs::write(&ct, egca(&["trace", p(&lis("buggy.ml")), "[1,3,3,5]"]).stdout).unwrap();
    fs::write(&rt, egca(&["trace", p(&lis("correct.ml")), "[1,3,3,5]"]).stdout).unwrap();
    let with_sources = json(&egca(&[
        "diff",
        "--from-traces",
        p(&ct),
        p(&rt),
        "--candidate-source",
        p(&lis("buggy.ml")),
        "--reference-source",
        p(&lis("correct.ml")),
    ]));
    assert_eq!(with_sources["k_star"], 15);
    assert_eq!(with_sources["alignment"], "static");
    let bare = json(&egca(&["diff", "--from-traces", p(&ct), p(&rt)]));
    assert_eq!(bare["alignment"], "trace");
    assert_eq!(bare["context"]["i"], 2);
    assert_eq!(bare["context"]["j"], 1);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"k\": 1}\n").unwrap();
    assert_eq!(code(&egca(&["diff", "--from-traces", p(&bad), p(&rt)])), 2);
}

#[test]
fn route_prints_the_mode() {
    let problem = corpus().join("problems/lis");
    let syntax = json(&egca(&["route", p(&lis("syntax.ml")), p(&problem)]));
    assert_eq!(syntax["mode"], "SYNTAX");
    assert!(syntax["span"].is_array());
    assert_eq!(json(&egca(&["route", p(&lis("buggy.ml")), p(&problem)]))["mode"], "LOGIC");
    assert_eq!(json(&egca(&["route", p(&lis("correct.ml")), p(&problem)]))["mode"], "CORRECT");
    assert_eq!(json(&egca(&["route", p(&lis("while_loops.ml")), p(&problem)]))["mode"], "CONSTRAINT");
    assert_eq!(code(&egca(&["route", p(&lis("buggy.ml")), "no-such-problem"])), 2);
}

#[test]
fn unreachable_localizer_falls_back() {
    let problem = corpus().join("problems/lis");
    let out = json(&egca(&["--localizer-url", "http://127.0.0.1:9/localize", "route", p(&lis("buggy.ml")), p(&problem)]));
    assert_eq!(out["mode"], "LOGIC");
    assert!(out["localizer_fallback"].is_string());
}

#[test]
fn credit_reports_a_group() {
    let problem = corpus().join("problems/lis");
    let out = json(&egca(&["credit", p(&corpus().join("candidates/lis")), p(&problem)]));
    let samples = out["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 4);
    let sum: f64 = samples.iter().map(|s| s["A"].as_f64().unwrap()).sum();
    assert!(sum.abs() < 1e-12);
    let one = tempfile::tempdir().unwrap();
    fs::copy(lis("correct.ml"), one.path().join("correct.ml")).unwrap();
    assert_eq!(code(&egca(&["credit", p(one.path()), p(&problem)])), 2);
}

#[test]
fn run_and_report_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (problems, cands) = (corpus().join("problems"), corpus().join("candidates"));
    let args = |out: &Path| {
        egca(&["--no-timing", "run", "--corpus", p(&problems), "--candidates", p(&cands), "--out", p(out)])
    };
    let (a, b) = (args(&dir.path().join("a")), args(&dir.path().join("b")));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let fa = fs::read(dir.path().join("a/report.json")).unwrap();
    assert_eq!(fa, fs::read(dir.path().join("b/report.json")).unwrap());
    let report = json(&a);
    for m in ["CORRECT", "CONSTRAINT", "SYNTAX", "LOGIC"] {
        assert!(report["mode_fractions"][m].as_f64().unwrap() > 0.0);
    }
    let rendered = egca(&["--no-timing", "report", p(&dir.path().join("a"))]);
    assert_eq!(rendered.stdout, a.stdout);
    assert!(stdout(&egca(&["--pretty", "report", p(&dir.path().join("a"))])).contains("LOGIC"));
    assert_eq!(code(&egca(&["report", p(&dir.path().join("missing"))])), 2);
    fs::write(dir.path().join("a/report.json"), "{}").unwrap();
    assert_eq!(code(&egca(&["report", p(&dir.path().join("a"))])), 2);
    assert_eq!(code(&egca(&["run", "--corpus", p(&problems), "--candidates", p(dir.path())])), 2);
}

#[test]
fn bad_config_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"fule": 10}"#).unwrap();
    assert_eq!(code(&egca(&["--config", p(&cfg), "trace", p(&lis("buggy.ml")), "[1]"])), 2);
    fs::write(&cfg, r#"{"fuel": 5}"#).unwrap();
    let out = egca(&["--config", p(&cfg), "trace", p(&lis("buggy.ml")), "[1,3,3,5]"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).ends_with("{\"outcome\":\"fuel-exhausted\"}\n"));
}

#[test]
fn sim_ablate_writes_summary_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ablate.json");
    fs::write(&cfg, r#"{"base": {"steps": 3, "group_size": 4}, "seeds": 2}"#).unwrap();
    let out_dir = dir.path().join("out");
    let problems = corpus().join("problems");
    let summary = json(&egca(&["sim", "ablate", p(&cfg), "--corpus", p(&problems), "--out", p(&out_dir)]));
    let keys: Vec<&String> = summary.as_object().unwrap().keys().collect();
    assert_eq!(keys, vec!["earliest", "last", "random-boundary", "uniform"]);
    assert_eq!(summary["uniform"]["seeds"], 2);
    let saved: Value = serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(saved, summary);
    for s in keys {
        let csv = fs::read_to_string(out_dir.join(format!("curves_{s}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }
    fs::write(&cfg, r#"{"base": {"group_size": 1}}"#).unwrap();
    assert_eq!(code(&egca(&["sim", "ablate", p(&cfg), "--corpus", p(&problems)])), 2);
    fs::write(&cfg, r#"{"seedz": 3}"#).unwrap();
    assert_eq!(code(&egca(&["sim", "ablate", p(&cfg), "--corpus", p(&problems)])), 2);
    assert_eq!(code(&egca(&["sim", "ablate", "missing.json", "--corpus", p(&problems)])), 2);
}
