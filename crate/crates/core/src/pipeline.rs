//! Corpus loading and the end-to-end routing and credit pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{comparable, similarity, SimilarityScore, Thresholds};
use crate::constraints::{self, Constraint, ConstraintVerdict};
use crate::credit::{classify, credit_group, Checks, CreditReport, FailureMode, ModeKind, RoutedSample};
use crate::divergence::{
    align_programs, last_divergence, localize, AlignedPair, Divergence, LocalizeContext, LocalizerBackend,
};
use crate::exec::{run, run_tests, TestOutcome, Trace, UnitTest, DEFAULT_FUEL};
use crate::sim::TemplateSpec;
use crate::syntax::{syntax_span, tokenize_lossy, TokenRange};
use crate::Program;

#[derive(Debug, Error)]
#[error("{}: {reason}", path.display())]
pub struct CorpusError {
    pub path: PathBuf,
    pub reason: String,
}

impl CorpusError {
    fn new(path: &Path, reason: impl Into<String>) -> Self {
        CorpusError { path: path.to_path_buf(), reason: reason.into() }
    }
}

#[derive(Debug, Deserialize)]
struct TestsFile {
    tests: Vec<UnitTest>,
}

#[derive(Debug, Clone)]
pub struct CorpusProblem {
    pub id: String,
    pub prompt: String,
    pub reference: Program,
    pub tests: Vec<UnitTest>,
    pub constraints: Vec<Constraint>,
    /// True when constraints came from `constraints.json` rather than
    /// extraction.
    pub explicit_constraints: bool,
    pub template: Option<TemplateSpec>,
}

impl CorpusProblem {
    /// Prompt with the rendered constraint suffix.
    pub fn conditioned_prompt(&self) -> String {
        let suffix = constraints::render_suffix(&self.constraints);
        if suffix.is_empty() {
            self.prompt.clone()
        } else {
            format!("{}\n\nConstraints:\n{suffix}", self.prompt.trim_end())
        }
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::new(path, format!("unreadable: {e}")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    serde_json::from_str(&read(path)?).map_err(|e| CorpusError::new(path, format!("invalid format: {e}")))
}

/// Load and validate one problem directory.
pub fn load_problem(dir: &Path) -> Result<CorpusProblem, CorpusError> {
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CorpusError::new(dir, "problem directory has no usable name"))?
        .to_string();
    let prompt = read(&dir.join("prompt.txt"))?;
    let ref_path = dir.join("reference.ml");
    let reference =
        Program::parse(&read(&ref_path)?).map_err(|d| CorpusError::new(&ref_path, format!("reference does not parse: {d}")))?;
    let tests_path = dir.join("tests.json");
    let tests = read_json::<TestsFile>(&tests_path)?.tests;
    if tests.is_empty() {
        return Err(CorpusError::new(&tests_path, "no tests"));
    }
    let outcome = run_tests(&reference, &tests, DEFAULT_FUEL);
    if let Some(i) = outcome.first_failing {
        return Err(CorpusError::new(&ref_path, format!("reference not canonical: fails test {i}")));
    }
    let constraints_path = dir.join("constraints.json");
    let (constraints, explicit) = if constraints_path.exists() {
        let cs: Vec<Constraint> = read_json(&constraints_path)?;
        for c in &cs {
            c.validate().map_err(|e| CorpusError::new(&constraints_path, e.to_string()))?;
        }
        (cs, true)
    } else {
        (constraints::extract(&reference).map_err(|e| CorpusError::new(&ref_path, e.to_string()))?, false)
    };
    if !constraints::check(&reference, &constraints).satisfied {
        return Err(CorpusError::new(&constraints_path, "reference violates its constraints"));
    }
    let template_path = dir.join("template.json");
    let template = if template_path.exists() { Some(read_json(&template_path)?) } else { None };
    Ok(CorpusProblem { id, prompt, reference, tests, constraints, explicit_constraints: explicit, template })
}

/// Load every problem directory under `root`, sorted by id.
pub fn load_corpus(root: &Path) -> Result<Vec<CorpusProblem>, CorpusError> {
    load_corpora(&[root])
}

/// Load several corpus roots into one problem list. Ids must be unique
/// across all roots.
pub fn load_corpora<P: AsRef<Path>>(roots: &[P]) -> Result<Vec<CorpusProblem>, CorpusError> {
    let mut problems: Vec<CorpusProblem> = Vec::new();
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    for root in roots {
        let root = root.as_ref();
        let entries = fs::read_dir(root).map_err(|e| CorpusError::new(root, format!("unreadable: {e}")))?;
        let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(CorpusError::new(root, "no problems found"));
        }
        for dir in dirs {
            let p = load_problem(&dir)?;
            if let Some(prev) = seen.insert(p.id.clone(), dir.clone()) {
                return Err(CorpusError::new(&dir, format!("duplicate problem id `{}` (also {})", p.id, prev.display())));
            }
            problems.push(p);
        }
    }
    problems.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(problems)
}

/// Candidate programs in a directory: `(file stem, source)` for every
/// `*.ml` file, sorted by name.
pub fn load_candidates(dir: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::new(dir, format!("unreadable: {e}")))?;
    let mut files: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "ml")).collect();
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            read(&f).map(|src| (stem, src))
        })
        .collect()
}

/// Which divergence the LOGIC span is taken from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceTarget {
    #[default]
    Earliest,
    Last,
}

#[derive(Debug, Clone)]
pub struct RouteOptions {
    pub thresholds: Thresholds,
    pub fuel: usize,
    pub backend: LocalizerBackend,
    pub target: DivergenceTarget,
}

impl Default for RouteOptions {
    fn default() -> Self {
        RouteOptions {
            thresholds: Thresholds::default(),
            fuel: DEFAULT_FUEL,
            backend: LocalizerBackend::Heuristic,
            target: DivergenceTarget::Earliest,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub parse: f64,
    pub constraints: f64,
    pub similarity: f64,
    pub execute: f64,
    pub localize: f64,
}

impl StageTimes {
    fn add(&mut self, other: &StageTimes) {
        self.parse += other.parse;
        self.constraints += other.constraints;
        self.similarity += other.similarity;
        self.execute += other.execute;
        self.localize += other.localize;
    }
}

/// Failing-input traces for a LOGIC sample.
#[derive(Debug, Clone)]
pub struct LogicDetail {
    pub failing_test: usize,
    pub candidate_trace: Trace,
    pub earliest: Option<Divergence>,
    pub last: Option<Divergence>,
}

/// Everything the gates found out about one candidate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub token_count: usize,
    pub program: Option<Program>,
    pub tests: Option<TestOutcome>,
    pub verdict: Option<ConstraintVerdict>,
    pub similarity: Option<SimilarityScore>,
    pub checks: Checks,
    pub mode: FailureMode,
    pub logic: Option<LogicDetail>,
    /// Set when the external localizer's answer was discarded.
    pub fallback: Option<String>,
    pub times: StageTimes,
}

impl Evaluation {
    pub fn r_hat(&self) -> f64 {
        self.checks.r_hat
    }

    pub fn routed(&self, id: &str) -> RoutedSample {
        RoutedSample {
            id: id.to_string(),
            token_count: self.token_count,
            r_hat: self.checks.r_hat,
            constraints_ok: self.checks.constraints_ok,
            comparable: self.checks.comparable,
            mode: self.mode.clone(),
        }
    }
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Parse, check, execute, route and (for LOGIC) localize one candidate.
pub fn evaluate(problem: &CorpusProblem, source: &str, options: &RouteOptions) -> Evaluation {
    let mut times = StageTimes::default();
    let t = Instant::now();
    let parsed = Program::parse(source);
    times.parse = secs(t);
    let program = match parsed {
        Ok(p) => p,
        Err(diag) => {
            let token_count = tokenize_lossy(source).len().max(1);
            return Evaluation {
                token_count,
                program: None,
                tests: None,
                verdict: None,
                similarity: None,
                checks: Checks { raises: true, constraints_ok: false, comparable: false, r_hat: 0.0 },
                mode: FailureMode::Syntax { span: syntax_span(&diag, token_count), message: diag.message },
                logic: None,
                fallback: None,
                times,
            };
        }
    };
    let token_count = program.token_count();

    let t = Instant::now();
    let verdict = constraints::check(&program, &problem.constraints);
    times.constraints = secs(t);

    let t = Instant::now();
    let score = similarity(&program, &problem.reference);
    let is_comparable = comparable(score, options.thresholds);
    times.similarity = secs(t);

    let t = Instant::now();
    let tests = run_tests(&program, &problem.tests, options.fuel);
    times.execute = secs(t);

    let checks = Checks {
        raises: tests.runtime_error.is_some(),
        constraints_ok: verdict.satisfied,
        comparable: is_comparable,
        r_hat: tests.r_hat,
    };
    let mut logic = None;
    let mut fallback = None;
    let mode = match classify(&checks) {
        ModeKind::Syntax => {
            let (_, err) = tests.runtime_error.as_ref().expect("raising sample has an error");
            FailureMode::Syntax { span: err.span, message: err.message.clone() }
        }
        ModeKind::Constraint => {
            FailureMode::Constraint { constraints_ok: checks.constraints_ok, comparable: checks.comparable }
        }
        ModeKind::Correct => FailureMode::Correct,
        ModeKind::Logic => {
            let t = Instant::now();
            let d = tests.first_failing.expect("LOGIC sample fails a test");
            let input = &problem.tests[d].args;
            let candidate_trace = run(&program, input, options.fuel);
            let reference_trace = run(&problem.reference, input, options.fuel);
            times.execute += secs(t);

            let t = Instant::now();
            let alignment = align_programs(&program, &problem.reference);
            let pair = AlignedPair { candidate: &candidate_trace, reference: &reference_trace, alignment: &alignment };
            let ctx = LocalizeContext {
                candidate_source: source,
                reference_source: problem.reference.source(),
                failing_input: input,
            };
            let loc = localize(&pair, &options.backend, ctx);
            fallback = loc.fallback;
            let last = last_divergence(&pair);
            times.localize = secs(t);
            let chosen = match options.target {
                DivergenceTarget::Earliest => loc.divergence.clone(),
                DivergenceTarget::Last => last.clone(),
            };
            logic = Some(LogicDetail { failing_test: d, candidate_trace, earliest: loc.divergence, last });
            FailureMode::Logic { divergence: chosen.map(Box::new) }
        }
    };
    Evaluation {
        token_count,
        program: Some(program),
        tests: Some(tests),
        verdict: Some(verdict),
        similarity: Some(score),
        checks,
        mode,
        logic,
        fallback,
        times,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub groups: Vec<CreditReport>,
    pub mode_counts: BTreeMap<ModeKind, usize>,
    pub mode_fractions: BTreeMap<ModeKind, f64>,
    /// LOGIC samples for which a divergence was localized, over all samples.
    pub localization_rate: f64,
    /// LOGIC samples where no divergence was found.
    pub localization_misses: usize,
    pub localizer: String,
    pub fallback_count: usize,
    /// Per-problem failures that kept a group from being credited.
    pub errors: Vec<String>,
    /// Omitted when timing is disabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage_seconds: Option<StageTimes>,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub route: RouteOptions,
    pub timing: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { route: RouteOptions::default(), timing: true }
    }
}

struct GroupResult {
    report: Result<CreditReport, String>,
    modes: Vec<ModeKind>,
    misses: usize,
    fallbacks: usize,
    times: StageTimes,
}

/// Credit one group of candidates for one problem.
pub fn credit_candidates(problem: &CorpusProblem, candidates: &[(String, String)], options: &RouteOptions) -> Result<CreditReport, String> {
    run_group(problem, candidates, options).report
}

fn run_group(problem: &CorpusProblem, candidates: &[(String, String)], options: &RouteOptions) -> GroupResult {
    let evals: Vec<(String, Evaluation)> =
        candidates.iter().map(|(id, src)| (id.clone(), evaluate(problem, src, options))).collect();
    let mut times = StageTimes::default();
    for (_, e) in &evals {
        times.add(&e.times);
    }
    let modes = evals.iter().map(|(_, e)| e.mode.kind()).collect();
    let misses = evals.iter().filter(|(_, e)| matches!(e.mode, FailureMode::Logic { divergence: None })).count();
    let fallbacks = evals.iter().filter(|(_, e)| e.fallback.is_some()).count();
    let report = if evals.len() < 2 {
        Err(format!("{}: a group needs at least two candidates, found {}", problem.id, evals.len()))
    } else {
        let routed = evals.iter().map(|(id, e)| e.routed(id)).collect();
        Ok(CreditReport::from(&credit_group(&problem.id, routed)))
    };
    GroupResult { report, modes, misses, fallbacks, times }
}

/// Route and credit every problem's candidates. Problems without
/// candidates are skipped; a failing group is reported, not fatal.
pub fn run_pipeline(
    corpus: &[CorpusProblem],
    candidates: &BTreeMap<String, Vec<(String, String)>>,
    options: &PipelineOptions,
) -> PipelineReport {
    let results: Vec<GroupResult> = corpus
        .par_iter()
        .filter_map(|p| candidates.get(&p.id).map(|c| run_group(p, c, &options.route)))
        .collect();

    let mut groups = Vec::new();
    let mut errors = Vec::new();
    let mut mode_counts: BTreeMap<ModeKind, usize> = ModeKind::ALL.iter().map(|&m| (m, 0)).collect();
    let (mut misses, mut fallbacks) = (0, 0);
    let mut times = StageTimes::default();
    for r in results {
        for m in &r.modes {
            *mode_counts.get_mut(m).unwrap() += 1;
        }
        misses += r.misses;
        fallbacks += r.fallbacks;
        times.add(&r.times);
        match r.report {
            Ok(g) => groups.push(g),
            Err(e) => errors.push(e),
        }
    }
    let total: usize = mode_counts.values().sum();
    let frac = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
    let mode_fractions = mode_counts.iter().map(|(&m, &n)| (m, frac(n))).collect();
    PipelineReport {
        groups,
        localization_rate: frac(mode_counts[&ModeKind::Logic] - misses),
        mode_counts,
        mode_fractions,
        localization_misses: misses,
        localizer: options.route.backend.name().to_string(),
        fallback_count: fallbacks,
        errors,
        stage_seconds: options.timing.then_some(times),
    }
}

/// Token range on `line` in `source` under lossy tokenization.
pub fn line_token_range(source: &str, line: u32) -> Option<TokenRange> {
    let tokens = tokenize_lossy(source);
    let idx: Vec<usize> = tokens.iter().enumerate().filter(|(_, t)| t.line == line).map(|(i, _)| i + 1).collect();
    Some(TokenRange::new(*idx.first()?, *idx.last()?))
}
