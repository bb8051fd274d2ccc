use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use super::*;
use crate::exec::{run, DEFAULT_FUEL};
use crate::syntax::{NodeKind, TokenKind};

const LIS: &str = "def longest_increasing_subsequence(nums):
  if not nums:
    return 0
  n = len(nums)
  dp = [1] * n
  for i in range(1, n):
    for j in range(i):
      if nums[i] > nums[j]:
        dp[i] = max(dp[i], dp[j] + 1)
  return max(dp)
";

fn ints(xs: &[i64]) -> Value {
    Value::List(xs.iter().map(|&x| Value::Int(x)).collect())
}

struct Case {
    cand: Program,
    ct: Trace,
    rt: Trace,
    alignment: Alignment,
}

impl Case {
    fn new(cand: &str, refr: &str, args: Vec<Value>) -> Case {
        let cand = Program::parse(cand).unwrap();
        let refr = Program::parse(refr).unwrap();
        let ct = run(&cand, &args, DEFAULT_FUEL);
        let rt = run(&refr, &args, DEFAULT_FUEL);
        let alignment = align_programs(&cand, &refr);
        Case { cand, ct, rt, alignment }
    }

    fn pair(&self) -> AlignedPair<'_> {
        AlignedPair { candidate: &self.ct, reference: &self.rt, alignment: &self.alignment }
    }
}

fn lis_case() -> Case {
    Case::new(&LIS.replace("nums[i] > nums[j]", "nums[i] >= nums[j]"), LIS, vec![ints(&[1, 3, 3, 5])])
}

#[test]
fn lis_pair_diverges_at_dp_update_for_i2_j1() {
    let case = lis_case();
    let d = earliest_divergence(&case.pair()).expect("divergence");
    let event = case.ct.event(d.k_star).unwrap();
    assert_eq!(event.state.get("i"), Some(&Value::Int(2)));
    assert_eq!(event.state.get("j"), Some(&Value::Int(1)));
    // The event is the dp update statement.
    let ast = case.cand.ast();
    let update = ast
        .statements()
        .into_iter()
        .find(|&s| ast.node(s).kind == NodeKind::Assign && ast.node(ast.children(s)[0]).kind == NodeKind::Index)
        .unwrap();
    assert_eq!(event.span, ast.node(update).head);
    // Candidate dp[2] is 3, reference dp[2] is 2.
    let dp = d.mismatch.variables().iter().find(|v| v.candidate == "dp").expect("dp differs");
    assert_eq!(dp.candidate_value, Some(ints(&[1, 2, 3, 1])));
    assert_eq!(dp.reference_value, Some(ints(&[1, 2, 2, 1])));
    // The credited span is the comparison statement and contains `>=`.
    let tokens = case.cand.tokens();
    let texts: Vec<&str> = d.token_span.indices().map(|t| tokens[t].text.as_str()).collect();
    assert_eq!(texts, ["if", "nums", "[", "i", "]", ">=", "nums", "[", "j", "]", ":"]);
    assert!(matches!(d.mismatch, Mismatch::ControlPath { .. }));
}

#[test]
fn identical_programs_never_diverge() {
    for input in [vec![], vec![1], vec![5, 4, 3], vec![1, 3, 3, 5], vec![2, 2, 2, 2, 2]] {
        let case = Case::new(LIS, LIS, vec![ints(&input)]);
        assert_eq!(earliest_divergence(&case.pair()), None);
        assert_eq!(last_divergence(&case.pair()), None);
    }
}

#[test]
fn planted_crash_is_localized_at_the_crash_event() {
    // The crash happens at the 7th executed statement.
    let refr = "def f(xs):\n  s = 0\n  for i in range(len(xs)):\n    s += xs[i]\n  return s";
    let cand = "def f(xs):\n  s = 0\n  for i in range(len(xs)):\n    s += xs[i] + 1 // (2 - i) * 0\n  return s";
    let case = Case::new(cand, refr, vec![ints(&[4, 5, 6])]);
    assert!(matches!(case.ct.outcome, Outcome::RuntimeError(_)));
    assert_eq!(case.ct.len(), 7);
    let d = earliest_divergence(&case.pair()).unwrap();
    assert_eq!(d.k_star, 7);
    assert!(matches!(d.mismatch, Mismatch::CandidateEnded { .. }));
}

#[test]
fn wrong_return_value_only_is_an_outcome_divergence() {
    let case = Case::new("def f(x):\n  y = x\n  return y + 1", "def f(x):\n  y = x\n  return y", vec![Value::Int(3)]);
    let d = earliest_divergence(&case.pair()).unwrap();
    assert_eq!(d.k_star, 2);
    assert!(matches!(d.mismatch, Mismatch::Outcome { .. }));
}

#[test]
fn longer_candidate_diverges_at_its_next_event() {
    let refr = "def f(n):\n  s = 0\n  for i in range(n):\n    s += i\n  return s";
    let cand = "def f(n):\n  s = 0\n  for i in range(n + 1):\n    s += i\n  return s";
    let case = Case::new(cand, refr, vec![Value::Int(2)]);
    let d = earliest_divergence(&case.pair()).unwrap();
    // Events: s=0, for(i=0), s+=0, for(i=1), s+=1, for(exhausted) vs for(i=2).
    assert_eq!(d.k_star, 6);
    assert_eq!(d.token_span, case.cand.ast().node(case.cand.ast().statements()[1]).head);
}

#[test]
fn renamed_variables_compare_through_the_map() {
    let refr = "def f(xs):\n  total = 0\n  for i in range(len(xs)):\n    total += xs[i]\n  return total";
    let cand = "def f(ys):\n  acc = 0\n  for k in range(len(ys)):\n    acc += ys[k] * 2\n  return acc";
    let case = Case::new(cand, refr, vec![ints(&[1, 2])]);
    let d = earliest_divergence(&case.pair()).unwrap();
    assert_eq!(d.k_star, 3);
    let v = &d.mismatch.variables()[0];
    assert_eq!((v.candidate.as_str(), v.reference.as_str()), ("acc", "total"));
}

#[test]
fn last_divergence_is_not_before_earliest() {
    let case = lis_case();
    let e = earliest_divergence(&case.pair()).unwrap();
    let l = last_divergence(&case.pair()).unwrap();
    assert!(l.k_star > e.k_star);
    assert!(l.k_star <= case.ct.len());
}

#[test]
fn heuristic_backend_delegates() {
    let case = lis_case();
    let ctx = LocalizeContext { candidate_source: "", reference_source: "", failing_input: &[] };
    let loc = localize(&case.pair(), &LocalizerBackend::Heuristic, ctx);
    assert_eq!(loc.divergence, earliest_divergence(&case.pair()));
    assert_eq!(loc.fallback, None);
}

#[test]
fn alignment_of_incomparable_programs_is_refused() {
    let a = Program::parse("def f(x):\n  return x").unwrap();
    let b = Program::parse("def f(x):\n  s = 0\n  while s < x:\n    s += 1\n  return s").unwrap();
    assert!(matches!(align(&a, &b, Thresholds::default()), Err(DivergenceError::Incomparable { .. })));
    assert!(align(&b, &b, Thresholds::default()).is_ok());
}

/// Serve `responses.len()` requests, replying with each body in turn.
/// Returns the URL and a handle yielding the received request bodies.
fn mock_server(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/localize", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for body in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}", body.len(), body).unwrap();
        }
        bodies
    });
    (url, handle)
}

#[test]
fn external_backend_answers_are_validated() {
    let case = lis_case();
    let input = [ints(&[1, 3, 3, 5])];
    let ctx = LocalizeContext { candidate_source: "cand", reference_source: "ref", failing_input: &input };
    let (url, server) = mock_server(vec![
        r#"{"k_star": 12, "confidence": 0.75}"#.into(),
        r#"{"k_star": 1000000000, "confidence": 0.9}"#.into(),
        r#"{"nope": true}"#.into(),
    ]);
    let backend = LocalizerBackend::External(ExternalLocalizer::new(url));

    let ok = localize(&case.pair(), &backend, ctx);
    assert_eq!(ok.fallback, None);
    let d = ok.divergence.unwrap();
    assert_eq!((d.k_star, d.confidence), (12, 0.75));
    assert_eq!(d.token_span, case.ct.event(12).unwrap().span);

    let heuristic = earliest_divergence(&case.pair());
    let out_of_range = localize(&case.pair(), &backend, ctx);
    assert_eq!(out_of_range.divergence, heuristic);
    assert!(out_of_range.fallback.unwrap().contains("outside"));

    let malformed = localize(&case.pair(), &backend, ctx);
    assert_eq!(malformed.divergence, heuristic);
    assert!(malformed.fallback.unwrap().contains("malformed"));

    let bodies = server.join().unwrap();
    let req: LocalizeRequest = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(req.candidate_source, "cand");
    assert_eq!(req.failing_input, input.to_vec());
    assert_eq!(Trace::from_jsonl(&req.candidate_trace).unwrap(), case.ct);
}

#[test]
fn offline_external_backend_falls_back() {
    let case = lis_case();
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = ExternalLocalizer::new(format!("http://127.0.0.1:{port}/")).with_timeout(Duration::from_secs(2));
    let ctx = LocalizeContext { candidate_source: "", reference_source: "", failing_input: &[] };
    let loc = localize(&case.pair(), &LocalizerBackend::External(client), ctx);
    assert_eq!(loc.divergence, earliest_divergence(&case.pair()));
    assert!(loc.fallback.is_some());
}

#[test]
fn trace_only_alignment_pairs_lines() {
    let case = lis_case();
    let a = align_traces(&case.ct, &case.rt);
    assert!(a.variable_map.contains_key("dp"));
    let from_traces = earliest_divergence(&AlignedPair { candidate: &case.ct, reference: &case.rt, alignment: &a }).unwrap();
    let static_ = earliest_divergence(&case.pair()).unwrap();
    assert_eq!(from_traces.k_star, static_.k_star);
    assert_eq!(from_traces.token_span, static_.token_span);
    let ge = case.cand.tokens().iter().position(|t| t.kind == TokenKind::Operator && t.text == ">=").unwrap() + 1;
    assert!(from_traces.token_span.contains(ge));
}
