use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use egca::cfg::{comparable, similarity, Thresholds};
use egca::divergence::{
    align_programs, align_traces, localize, AlignedPair, Divergence, ExternalLocalizer, LocalizeContext, LocalizerBackend,
};
use egca::exec::{run, Trace, Value, DEFAULT_FUEL, MAX_FUEL};
use egca::pipeline::{
    credit_candidates, evaluate, load_candidates, load_corpora, load_problem, run_pipeline, PipelineOptions, PipelineReport,
    RouteOptions,
};
use egca::sim::{ablate, sim_problems, SimConfig, Strategy};
use egca::Program;

use crate::render;
use crate::{Cli, Command, DiffArgs, RunArgs, SimCommand};

pub enum Failure {
    /// Bad invocation: exit code 1.
    Usage(String),
    /// Unreadable or invalid input: exit code 2.
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    thresholds: Option<Thresholds>,
    fuel: Option<usize>,
    jobs: Option<usize>,
    localizer_url: Option<String>,
    localizer_timeout_secs: Option<u64>,
}

struct Settings {
    route: RouteOptions,
    jobs: Option<usize>,
}

fn resolve(cli: &Cli) -> Result<Settings> {
    let file: FileConfig = match &cli.config {
        Some(path) => serde_json::from_str(&read(path)?).with_context(|| format!("{}: invalid configuration", path.display()))?,
        None => FileConfig::default(),
    };
    let fuel = cli.fuel.or(file.fuel).unwrap_or(DEFAULT_FUEL);
    if fuel == 0 || fuel > MAX_FUEL {
        return Err(Failure::Usage(format!("fuel must be in 1..={MAX_FUEL}, got {fuel}")));
    }
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let thresholds = file.thresholds.unwrap_or_default();
    let url = cli.localizer_url.clone().or_else(|| std::env::var("EGCA_LOCALIZER_URL").ok().filter(|u| !u.is_empty())).or(file.localizer_url);
    let backend = match url {
        Some(url) => {
            let mut client = ExternalLocalizer::new(url);
            if let Some(s) = file.localizer_timeout_secs {
                client = client.with_timeout(Duration::from_secs(s));
            }
            LocalizerBackend::External(client)
        }
        None => LocalizerBackend::Heuristic,
    };
    Ok(Settings { route: RouteOptions { thresholds, fuel, backend, ..RouteOptions::default() }, jobs })
}

pub fn dispatch(cli: &Cli) -> Result<String> {
    let settings = resolve(cli)?;
    if let Some(jobs) = settings.jobs {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match &cli.command {
        Command::Trace { program, args } => trace(program, args, &settings),
        Command::Diff(args) => diff(cli, args, &settings),
        Command::Route { candidate, problem } => route(cli, candidate, problem, &settings),
        Command::Credit { group, problem } => credit(cli, group, problem, &settings),
        Command::Run(args) => run_corpus(cli, args, &settings),
        Command::Report { run_dir } => report(cli, run_dir),
        Command::Sim { command: SimCommand::Ablate { ablation, corpus, out } } => {
            sim_ablate(cli, ablation.as_deref(), corpus, out.as_deref(), &settings)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("{}: unreadable", path.display()))
}

fn parse_program(path: &Path) -> anyhow::Result<Program> {
    let src = read(path)?;
    Program::parse(&src).map_err(|d| anyhow!("{}: {d}", path.display()))
}

fn emit<T: Serialize>(cli: &Cli, value: &T) -> Result<String> {
    let s = if cli.pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) };
    Ok(s.map_err(anyhow::Error::from)? + "\n")
}

/// Arguments from the command-line JSON input.
pub fn parse_input(program: &Program, input: &str) -> anyhow::Result<Vec<Value>> {
    let value: Value = serde_json::from_str(input).with_context(|| format!("input `{input}` is not a JSON boolean, integer or list"))?;
    let arity = program.ast().params().len();
    if arity == 1 {
        return Ok(vec![value]);
    }
    match value {
        Value::List(items) if items.len() == arity => Ok(items),
        _ => bail!("`{}` takes {arity} arguments: pass a JSON array of {arity} values", program.name()),
    }
}

fn trace(path: &Path, args: &str, settings: &Settings) -> Result<String> {
    let program = parse_program(path)?;
    let args = parse_input(&program, args)?;
    Ok(run(&program, &args, settings.route.fuel).to_jsonl())
}

fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    Trace::from_jsonl(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub struct DiffView<'a> {
    pub divergence: Option<Divergence>,
    pub candidate: &'a Trace,
    pub program: Option<&'a Program>,
    pub source: Option<&'a str>,
    pub comparable: Option<bool>,
    pub alignment: &'static str,
}

impl DiffView<'_> {
    pub fn to_json(&self) -> Json {
        let Some(d) = &self.divergence else {
            return json!({ "k_star": null, "alignment": self.alignment });
        };
        let event = self.candidate.event(d.k_star);
        let mut out = json!({
            "k_star": d.k_star,
            "token_span": d.token_span,
            "line": event.map(|e| e.line),
            "mismatch": d.mismatch,
            "context": d.context,
            "confidence": d.confidence,
            "alignment": self.alignment,
        });
        if let Some(p) = self.program {
            if d.token_span.within(p.token_count()) {
                let text: Vec<&str> = d.token_span.indices().map(|t| p.tokens()[t].text.as_str()).collect();
                out["tokens"] = json!(text.join(" "));
            }
        } else if let (Some(src), Some(e)) = (self.source, event) {
            if let Some(line) = src.lines().nth(e.line.saturating_sub(1) as usize) {
                out["source_line"] = json!(line.trim());
            }
        }
        if let Some(c) = self.comparable {
            out["comparable"] = json!(c);
        }
        out
    }
}

fn diff(cli: &Cli, args: &DiffArgs, settings: &Settings) -> Result<String> {
    if args.from_traces {
        return diff_traces(cli, args, settings);
    }
    let cand = parse_program(&args.candidate)?;
    let refr = parse_program(&args.reference)?;
    let input = parse_input(&refr, args.input.as_deref().unwrap_or_default())?;
    let ct = run(&cand, &input, settings.route.fuel);
    let rt = run(&refr, &input, settings.route.fuel);
    let alignment = align_programs(&cand, &refr);
    let pair = AlignedPair { candidate: &ct, reference: &rt, alignment: &alignment };
    let ctx = LocalizeContext { candidate_source: cand.source(), reference_source: refr.source(), failing_input: &input };
    let loc = localize(&pair, &settings.route.backend, ctx);
    let view = DiffView {
        divergence: loc.divergence,
        candidate: &ct,
        program: Some(&cand),
        source: None,
        comparable: Some(comparable(similarity(&cand, &refr), settings.route.thresholds)),
        alignment: "static",
    };
    finish_diff(cli, &view)
}

fn diff_traces(cli: &Cli, args: &DiffArgs, settings: &Settings) -> Result<String> {
    let ct = read_trace(&args.candidate)?;
    let rt = read_trace(&args.reference)?;
    let sources = |p: &Option<PathBuf>| p.as_deref().map(read).transpose();
    let (cs, rs) = (sources(&args.candidate_source)?, sources(&args.reference_source)?);
    let programs = match (&cs, &rs) {
        (Some(c), Some(r)) => Program::parse(c).ok().zip(Program::parse(r).ok()),
        _ => None,
    };
    let (alignment, kind) = match &programs {
        Some((c, r)) => (align_programs(c, r), "static"),
        None => (align_traces(&ct, &rt), "trace"),
    };
    let pair = AlignedPair { candidate: &ct, reference: &rt, alignment: &alignment };
    let ctx = LocalizeContext {
        candidate_source: cs.as_deref().unwrap_or_default(),
        reference_source: rs.as_deref().unwrap_or_default(),
        failing_input: &[],
    };
    let loc = localize(&pair, &settings.route.backend, ctx);
    let view = DiffView {
        divergence: loc.divergence,
        candidate: &ct,
        program: programs.as_ref().map(|(c, _)| c),
        source: cs.as_deref(),
        comparable: None,
        alignment: kind,
    };
    finish_diff(cli, &view)
}

fn finish_diff(cli: &Cli, view: &DiffView<'_>) -> Result<String> {
    if cli.pretty {
        Ok(render::diff(&view.to_json()))
    } else {
        emit(cli, &view.to_json())
    }
}

pub fn route_json(e: &egca::pipeline::Evaluation) -> Json {
    let mut out = serde_json::to_value(&e.mode).expect("serializable");
    if let Some(span) = e.mode.span() {
        out["span"] = json!(span);
    }
    out["r_hat"] = json!(e.checks.r_hat);
    out["constraints_ok"] = json!(e.checks.constraints_ok);
    out["comparable"] = json!(e.checks.comparable);
    out["token_count"] = json!(e.token_count);
    if let Some(f) = &e.fallback {
        out["localizer_fallback"] = json!(f);
    }
    out
}

fn route(cli: &Cli, candidate: &Path, problem: &Path, settings: &Settings) -> Result<String> {
    let problem = load_problem(problem).map_err(anyhow::Error::from)?;
    let source = read(candidate)?;
    let e = evaluate(&problem, &source, &settings.route);
    let out = route_json(&e);
    if cli.pretty {
        Ok(render::route(&out))
    } else {
        emit(cli, &out)
    }
}

fn credit(cli: &Cli, group: &Path, problem: &Path, settings: &Settings) -> Result<String> {
    let problem = load_problem(problem).map_err(anyhow::Error::from)?;
    let candidates = load_candidates(group).map_err(anyhow::Error::from)?;
    let report = credit_candidates(&problem, &candidates, &settings.route).map_err(|e| anyhow!(e))?;
    emit(cli, &report)
}

fn run_corpus(cli: &Cli, args: &RunArgs, settings: &Settings) -> Result<String> {
    let corpus = load_corpora(&args.corpus).map_err(anyhow::Error::from)?;
    let mut candidates = BTreeMap::new();
    for p in &corpus {
        let dir = args.candidates.join(&p.id);
        if dir.is_dir() {
            candidates.insert(p.id.clone(), load_candidates(&dir).map_err(anyhow::Error::from)?);
        }
    }
    if candidates.is_empty() {
        return Err(Failure::Data(anyhow!("{}: no candidate directory matches a problem id", args.candidates.display())));
    }
    let options = PipelineOptions { route: settings.route.clone(), timing: !cli.no_timing };
    let report = run_pipeline(&corpus, &candidates, &options);
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
        let path = out.join("report.json");
        let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n";
        fs::write(&path, text).with_context(|| format!("{}: cannot write", path.display()))?;
    }
    render_report(cli, &report)
}

fn render_report(cli: &Cli, report: &PipelineReport) -> Result<String> {
    if cli.pretty {
        Ok(render::report(report))
    } else {
        emit(cli, report)
    }
}

fn report(cli: &Cli, run_dir: &Path) -> Result<String> {
    let path = run_dir.join("report.json");
    let mut report: PipelineReport =
        serde_json::from_str(&read(&path)?).with_context(|| format!("{}: not a pipeline report", path.display()))?;
    if cli.no_timing {
        report.stage_seconds = None;
    }
    render_report(cli, &report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub base: SimConfig,
    /// Seeds `0..seeds`, unless `seed_list` is given.
    pub seeds: u64,
    pub seed_list: Option<Vec<u64>>,
    pub strategies: Vec<Strategy>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { base: SimConfig::default(), seeds: 20, seed_list: None, strategies: Strategy::ALL.to_vec() }
    }
}

fn sim_ablate(cli: &Cli, config: Option<&Path>, corpus: &[PathBuf], out: Option<&Path>, settings: &Settings) -> Result<String> {
    let cfg: AblateConfig = match config {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("{}: invalid ablation configuration", p.display()))?,
        None => AblateConfig::default(),
    };
    cfg.base.validate().map_err(|e| Failure::Data(e.into()))?;
    let seeds: Vec<u64> = cfg.seed_list.clone().unwrap_or_else(|| (0..cfg.seeds).collect());
    let mut strategies = cfg.strategies.clone();
    strategies.sort();
    strategies.dedup();
    let corpus = load_corpora(corpus).map_err(anyhow::Error::from)?;
    let route = RouteOptions { backend: LocalizerBackend::Heuristic, ..settings.route.clone() };
    let problems = sim_problems(corpus, &route).map_err(anyhow::Error::from)?;
    if problems.is_empty() {
        return Err(Failure::Data(anyhow!("no problem in the corpus has a template")));
    }
    let ablation = ablate(&problems, &cfg.base, &seeds, &strategies).map_err(anyhow::Error::from)?;
    let summary = ablation.summary_json();
    if let Some(out) = out {
        fs::create_dir_all(out).with_context(|| format!("{}: cannot create", out.display()))?;
        let text = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n";
        fs::write(out.join("summary.json"), text).with_context(|| format!("{}: cannot write", out.display()))?;
        for s in &strategies {
            let curve = ablation.mean_curve(*s).expect("strategy was run");
            let path = out.join(format!("curves_{}.csv", s.as_str()));
            fs::write(&path, curve.to_csv()).with_context(|| format!("{}: cannot write", path.display()))?;
        }
    }
    if cli.pretty {
        Ok(render::ablation(&summary))
    } else {
        emit(cli, &summary)
    }
}
