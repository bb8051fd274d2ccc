#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use egca::credit::FailureMode;
use egca::divergence::{Alignment, Divergence, Mismatch};
use egca::exec::{Outcome, Trace, Value};
use egca::pipeline::{load_corpus, RouteOptions};
use egca::sim::{credit_samples, sample_group, sim_problems, Objective, SimConfig, SimEval, SimProblem, Strategy, TabularPolicy, TemplateSpace};
use egca::syntax::{tokenize, TokenKind, TokenRange};
use egca::Program;

pub fn corpus_root() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const INTS: [&str; 3] = ["a", "b", "c"];

/// Random terminating programs over `def f(xs, n)`.
struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    /// Loop variables in scope, with whether they index `xs` safely.
    loops: Vec<(String, bool)>,
    straight: bool,
}

impl Gen<'_> {
    fn atom(&mut self) -> String {
        let mut pool: Vec<String> = INTS.iter().map(|s| s.to_string()).collect();
        pool.push("n".into());
        pool.push(self.rng.gen_range(0..5).to_string());
        pool.push("len(xs)".into());
        for (v, safe) in &self.loops {
            pool.push(v.clone());
            if *safe {
                pool.push(format!("xs[{v}]"));
            }
        }
        pool.choose(self.rng).unwrap().clone()
    }

    fn expr(&mut self) -> String {
        match self.rng.gen_range(0..6) {
            0 | 1 => self.atom(),
            2 => format!("{} + {}", self.atom(), self.atom()),
            3 => format!("{} - {}", self.atom(), self.atom()),
            4 => format!("abs({})", self.atom()),
            _ => format!("{}({}, {})", ["max", "min"][self.rng.gen_range(0..2)], self.atom(), self.atom()),
        }
    }

    fn cond(&mut self) -> String {
        let op = ["<", "<=", ">", ">=", "==", "!="][self.rng.gen_range(0..6)];
        let base = format!("{} {op} {}", self.atom(), self.atom());
        match self.rng.gen_range(0..5) {
            0 => format!("not {base}"),
            1 => format!("{base} and {} < {}", self.atom(), self.atom()),
            _ => base,
        }
    }

    fn stmt(&mut self, depth: usize, out: &mut Vec<String>) {
        let pad = "  ".repeat(depth);
        let compound = !self.straight && depth < 3;
        match self.rng.gen_range(0..if compound { 7 } else { 4 }) {
            0 => {
                let v = INTS.choose(self.rng).unwrap();
                out.push(format!("{pad}{v} = {}", self.expr()));
            }
            1 => {
                let v = INTS.choose(self.rng).unwrap();
                let op = ["+=", "-="][self.rng.gen_range(0..2)];
                out.push(format!("{pad}{v} {op} {}", self.expr()));
            }
            2 => out.push(format!("{pad}append(out, {})", self.expr())),
            3 => {
                let v = INTS.choose(self.rng).unwrap();
                out.push(format!("{pad}{v} = {} + {}", self.atom(), self.rng.gen_range(1..4)));
            }
            4 | 5 => {
                out.push(format!("{pad}if {}:", self.cond()));
                self.block(depth + 1, out);
                match self.rng.gen_range(0..3) {
                    0 => {
                        out.push(format!("{pad}else:"));
                        self.block(depth + 1, out);
                    }
                    1 => {
                        out.push(format!("{pad}elif {}:", self.cond()));
                        self.block(depth + 1, out);
                    }
                    _ => {}
                }
            }
            _ => {
                let v = ["i", "j", "k"][self.loops.len().min(2)].to_string();
                if self.loops.iter().any(|(l, _)| *l == v) {
                    out.push(format!("{pad}a += 1"));
                    return;
                }
                let (range, safe) = match self.rng.gen_range(0..3) {
                    0 => ("len(xs)".to_string(), true),
                    1 => (self.rng.gen_range(1..4).to_string(), false),
                    _ => (format!("1, {}", self.rng.gen_range(2..5)), false),
                };
                out.push(format!("{pad}for {v} in range({range}):"));
                self.loops.push((v, safe));
                self.block(depth + 1, out);
                self.loops.pop();
            }
        }
    }

    fn block(&mut self, depth: usize, out: &mut Vec<String>) {
        for _ in 0..self.rng.gen_range(1..3) {
            self.stmt(depth, out);
        }
    }
}

/// Body lines of a random program, without the header and return.
fn body(rng: &mut ChaCha8Rng, straight: bool, len: usize) -> Vec<String> {
    let mut out = vec!["  a = 0".to_string(), "  b = 1".to_string(), "  c = n".to_string(), "  out = []".to_string()];
    let mut g = Gen { rng, loops: Vec::new(), straight };
    for _ in 0..len {
        g.stmt(1, &mut out);
    }
    out
}

fn assemble(body: &[String], ret: &str) -> String {
    let mut s = String::from("def f(xs, n):\n");
    for l in body {
        s.push_str(l);
        s.push('\n');
    }
    s.push_str(&format!("  return {ret}\n"));
    s
}

pub fn random_program(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(1..6);
    let lines = body(rng, false, len);
    let ret = ["a", "b + c", "out", "a - c"][rng.gen_range(0..4)];
    assemble(&lines, ret)
}

/// Straight-line program body lines (no compound statements).
pub fn straight_line_body(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.gen_range(1..8);
    body(rng, true, len)
}

pub fn with_return(body: &[String], ret: &str) -> String {
    assemble(body, ret)
}

pub fn random_input(rng: &mut ChaCha8Rng) -> Vec<Value> {
    let xs = (0..rng.gen_range(0..6)).map(|_| Value::Int(rng.gen_range(-5..6))).collect();
    vec![Value::List(xs), Value::Int(rng.gen_range(-2..6))]
}

/// Apply one random single-token mutation: comparison swap, constant
/// +/-1, `+`/`-` swap or variable swap. `None` if no mutation applies or
/// the result does not parse.
pub fn mutate(source: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    const CMP: [&str; 6] = ["<", "<=", ">", ">=", "==", "!="];
    let tokens = tokenize(source).ok()?;
    let mut sites: Vec<(usize, String)> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let text = t.text.as_str();
        let replacement = match t.kind {
            TokenKind::Operator if CMP.contains(&text) => Some(CMP.iter().filter(|&&c| c != text).copied().collect::<Vec<_>>().choose(rng).unwrap().to_string()),
            TokenKind::Operator if text == "+" => Some("-".into()),
            TokenKind::Operator if text == "-" => Some("+".into()),
            TokenKind::Operator if text == "+=" => Some("-=".into()),
            TokenKind::Operator if text == "-=" => Some("+=".into()),
            TokenKind::Integer => {
                let v: i64 = text.parse().ok()?;
                Some((v + if rng.gen_bool(0.5) { 1 } else { -1 }).abs().to_string())
            }
            TokenKind::Identifier if INTS.contains(&text) => Some(INTS.iter().filter(|&&c| c != text).copied().collect::<Vec<_>>().choose(rng).unwrap().to_string()),
            _ => None,
        };
        if let Some(r) = replacement {
            if r != text {
                sites.push((i, r));
            }
        }
    }
    let (i, r) = sites.choose(rng)?.clone();
    let span = tokens[i].span;
    let mutated = format!("{}{}{}", &source[..span.start], r, &source[span.end..]);
    Program::parse(&mutated).ok().map(|_| mutated)
}

/// Random program plus a parsing mutant of it.
pub fn mutant_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    loop {
        let original = random_program(rng);
        if let Some(m) = mutate(&original, rng) {
            return (m, original);
        }
    }
}

fn outcomes_agree(c: &Outcome, r: &Outcome) -> bool {
    match (c, r) {
        (Outcome::RuntimeError(a), Outcome::RuntimeError(b)) => a.message == b.message,
        _ => c == r,
    }
}

/// Minimum mismatch index by exhaustive comparison of every aligned
/// event pair.
///
/// Events at sites outside the alignment are dropped from both traces, the
/// remaining events are paired by position, and every pair whose sites do
/// not correspond or whose mapped variables differ is a mismatch. A final
/// candidate event that raised never completed, so it mismatches too. Past
/// the shorter trace: extra candidate events mismatch at the first of them,
/// a candidate that stops early mismatches at its last event, and equal
/// lengths with different outcomes mismatch at the candidate's last event.
pub fn brute_force_k_star(candidate: &Trace, reference: &Trace, alignment: &Alignment) -> Option<usize> {
    let ref_sites: BTreeSet<_> = alignment.site_map.values().copied().collect();
    let cc: Vec<usize> = (0..candidate.len()).filter(|&i| alignment.site_map.contains_key(&candidate.events[i].span)).collect();
    let rc: Vec<usize> = (0..reference.len()).filter(|&i| ref_sites.contains(&reference.events[i].span)).collect();
    let crashed = matches!(candidate.outcome, Outcome::RuntimeError(_));
    let mut mismatches = Vec::new();
    for n in 0..cc.len().min(rc.len()) {
        let (c, r) = (&candidate.events[cc[n]], &reference.events[rc[n]]);
        let site = alignment.site_map[&c.span] != r.span;
        let state = alignment.variable_map.iter().any(|(cv, rv)| c.state.get(cv) != r.state.get(rv));
        let unfinished = crashed && cc[n] + 1 == candidate.len();
        if site || state || unfinished {
            mismatches.push(cc[n] + 1);
        }
    }
    if !candidate.is_empty() {
        if cc.len() > rc.len() {
            mismatches.push(cc[rc.len()] + 1);
        } else if cc.len() < rc.len() || !outcomes_agree(&candidate.outcome, &reference.outcome) {
            mismatches.push(candidate.len());
        }
    }
    mismatches.into_iter().min()
}

/// A random routed mode over `token_count` tokens; LOGIC and SYNTAX get a
/// random span.
pub fn random_mode(rng: &mut ChaCha8Rng, token_count: usize) -> FailureMode {
    let first = rng.gen_range(1..=token_count);
    let span = TokenRange::new(first, rng.gen_range(first..=token_count));
    match rng.gen_range(0..5) {
        0 => FailureMode::Correct,
        1 => FailureMode::Constraint { constraints_ok: rng.gen_bool(0.5), comparable: rng.gen_bool(0.5) },
        2 => FailureMode::Syntax { span, message: String::new() },
        3 => FailureMode::Logic { divergence: None },
        _ => FailureMode::Logic {
            divergence: Some(Box::new(Divergence {
                k_star: 1,
                token_span: span,
                mismatch: Mismatch::External,
                confidence: 1.0,
                context: Default::default(),
            })),
        },
    }
}

/// Random reward vector: pass rates `k/n` or arbitrary reals in `[0, 1]`.
pub fn random_rewards(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = rng.gen_range(2..65);
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(1..12);
        (0..g).map(|_| rng.gen_range(0..=n) as f64 / n as f64).collect()
    } else {
        (0..g).map(|_| rng.gen::<f64>()).collect()
    }
}

pub fn sim_suite() -> Vec<SimProblem> {
    let corpus = load_corpus(&corpus_root().join("problems")).unwrap();
    sim_problems(corpus, &RouteOptions::default()).unwrap()
}

fn random_policy(rng: &mut ChaCha8Rng, space: &TemplateSpace) -> TabularPolicy {
    let mut p = TabularPolicy::initial(space, rng.gen_range(0.5..2.0));
    for z in p.logits.iter_mut().flatten() {
        *z = rng.gen_range(-2.0..2.0);
    }
    p
}

/// A random objective over `problems`: groups sampled from random
/// policies, credited under a random strategy, and a different random
/// policy to evaluate at.
pub fn random_objective(rng: &mut ChaCha8Rng, problems: &[SimProblem], clip: bool, kl: bool) -> (Objective, Vec<TabularPolicy>) {
    let config = SimConfig { clip, kl, epsilon: 0.2, beta: 0.1, ..SimConfig::default() };
    let sampling: Vec<TabularPolicy> = problems.iter().map(|p| random_policy(rng, &p.space)).collect();
    let strategy = *Strategy::ALL.choose(rng).unwrap();
    let groups = problems
        .iter()
        .zip(&sampling)
        .map(|(p, pol)| {
            let samples = sample_group(pol, &p.space, rng.gen_range(2..9), rng);
            let evals: Vec<_> = samples.iter().map(|s| p.eval(&s.assignment)).collect();
            let refs: Vec<&SimEval> = evals.iter().map(|e| e.as_ref()).collect();
            credit_samples(p.id(), &refs, samples.into_iter().map(|s| s.assignment).collect(), strategy, rng)
        })
        .collect();
    let reference: Vec<TabularPolicy> = problems.iter().map(|p| random_policy(rng, &p.space)).collect();
    let objective = Objective::new(groups, &sampling, reference, &config);
    // Evaluate near the sampling policy so some ratios clip and some do not.
    let at = sampling
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for z in q.logits.iter_mut().flatten() {
                *z += rng.gen_range(-0.3..0.3);
            }
            q
        })
        .collect();
    (objective, at)
}

/// Relative error of the analytic gradient against central differences,
/// over all logits of all problems.
#[allow(clippy::needless_range_loop)]
pub fn gradient_error(objective: &Objective, at: &[TabularPolicy]) -> f64 {
    const H: f64 = 1e-6;
    let analytic = objective.gradient(at);
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for g in 0..at.len() {
        for h in 0..at[g].logits.len() {
            for j in 0..at[g].logits[h].len() {
                let mut plus = at.to_vec();
                plus[g].logits[h][j] += H;
                let mut minus = at.to_vec();
                minus[g].logits[h][j] -= H;
                let numeric = (objective.value(&plus) - objective.value(&minus)) / (2.0 * H);
                let a = analytic[g][h][j];
                diff += (a - numeric).powi(2);
                scale += a.powi(2).max(numeric.powi(2));
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        (diff / scale).sqrt()
    }
}
