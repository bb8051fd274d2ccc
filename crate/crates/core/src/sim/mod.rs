//! Synthetic policy-gradient training on template spaces.
//!
//! Each problem carries a template with a few holes. A tabular softmax
//! policy per problem picks one choice per hole, the rendered programs go
//! through the full routing and credit pipeline, and the hole logits are
//! updated from the token-level advantages that land on each hole.

mod ablate;
mod policy;
mod space;
mod train;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use ablate::{ablate, pooled_std, Ablation, StrategySummary};
pub use policy::{sample_group, softmax, Sample, TabularPolicy};
pub use space::{HoleSpec, Rendering, SpaceError, TemplateSpace, TemplateSpec, MAX_ASSIGNMENTS};
pub use train::{credit_samples, train, Budget, CreditedGroup, LearningCurve, Objective, SimConfig, Strategy, TrainRun};

use crate::constraints;
use crate::credit::{FailureMode, ModeKind};
use crate::divergence::Divergence;
use crate::pipeline::{evaluate, CorpusProblem, RouteOptions};
use crate::syntax::TokenRange;
use crate::Program;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("problem `{0}` has no template")]
    NoTemplate(String),
    #[error("problem `{problem}`: {source}")]
    Space { problem: String, source: SpaceError },
    #[error("problem `{0}`: no assignment passes all tests")]
    NoPassingAssignment(String),
    #[error("problem `{problem}`: every choice of hole `{hole}` violates the constraints")]
    HoleExhausted { problem: String, hole: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Pipeline outcome for one rendered assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEval {
    pub token_count: usize,
    pub r_hat: f64,
    pub constraints_ok: bool,
    pub comparable: bool,
    /// Routed mode, LOGIC localized at the earliest divergence.
    pub mode: FailureMode,
    pub last: Option<Divergence>,
    /// Spans of the candidate's events on the failing input.
    pub event_spans: Vec<TokenRange>,
    pub hole_spans: Vec<TokenRange>,
}

impl SimEval {
    pub fn correct(&self) -> bool {
        self.mode.kind() == ModeKind::Correct
    }
}

/// A corpus problem with its template space and a memo of evaluations.
/// Evaluation is deterministic, so the memo is shared by every run.
#[derive(Debug)]
pub struct SimProblem {
    pub problem: CorpusProblem,
    pub space: TemplateSpace,
    route: RouteOptions,
    cache: Mutex<HashMap<Vec<usize>, Arc<SimEval>>>,
}

impl SimProblem {
    /// Build the space, drop choices that can never satisfy the problem's
    /// constraints, and check that some assignment is correct.
    pub fn new(problem: CorpusProblem, route: RouteOptions) -> Result<SimProblem, SimError> {
        let id = problem.id.clone();
        let spec = problem.template.clone().ok_or_else(|| SimError::NoTemplate(id.clone()))?;
        let space_err = |source| SimError::Space { problem: id.clone(), source };
        let space = TemplateSpace::new(&spec).map_err(space_err)?;
        let spec = condition(&id, &spec, &space, &problem)?;
        let space = TemplateSpace::new(&spec).map_err(space_err)?;
        let sp = SimProblem { problem, space, route, cache: Mutex::new(HashMap::new()) };
        let assignments: Vec<_> = sp.space.assignments().collect();
        if !assignments.iter().any(|a| sp.eval(a).correct()) {
            return Err(SimError::NoPassingAssignment(id));
        }
        Ok(sp)
    }

    pub fn id(&self) -> &str {
        &self.problem.id
    }

    pub fn eval(&self, assignment: &[usize]) -> Arc<SimEval> {
        if let Some(e) = self.cache.lock().unwrap().get(assignment) {
            return e.clone();
        }
        let rendering = self.space.render(assignment);
        let e = evaluate(&self.problem, &rendering.source, &self.route);
        let (last, event_spans) = match e.logic {
            Some(l) => (l.last, l.candidate_trace.events.iter().map(|ev| ev.span).collect()),
            None => (None, Vec::new()),
        };
        let out = Arc::new(SimEval {
            token_count: e.token_count,
            r_hat: e.checks.r_hat,
            constraints_ok: e.checks.constraints_ok,
            comparable: e.checks.comparable,
            mode: e.mode,
            last,
            event_spans,
            hole_spans: rendering.hole_spans,
        });
        self.cache.lock().unwrap().entry(assignment.to_vec()).or_insert(out).clone()
    }
}

/// Keep a choice only if some completion containing it satisfies the
/// constraints. Completions that do not parse count as satisfying.
fn condition(id: &str, spec: &TemplateSpec, space: &TemplateSpace, problem: &CorpusProblem) -> Result<TemplateSpec, SimError> {
    let mut keep: Vec<Vec<bool>> = spec.holes.iter().map(|h| vec![false; h.choices.len()]).collect();
    for a in space.assignments() {
        let ok = match Program::parse(&space.render(&a).source) {
            Ok(p) => constraints::check(&p, &problem.constraints).satisfied,
            Err(_) => true,
        };
        if ok {
            for (h, &c) in a.iter().enumerate() {
                keep[h][c] = true;
            }
        }
    }
    let mut out = spec.clone();
    for (hole, keep) in out.holes.iter_mut().zip(&keep) {
        if !keep.iter().any(|&k| k) {
            return Err(SimError::HoleExhausted { problem: id.to_string(), hole: hole.name.clone() });
        }
        hole.choices = kept(&hole.choices, keep);
        hole.init_logits = hole.init_logits.as_ref().map(|l| kept(l, keep));
    }
    Ok(out)
}

fn kept<T: Clone>(xs: &[T], keep: &[bool]) -> Vec<T> {
    xs.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| x.clone()).collect()
}

/// Load every problem of a corpus that has a template.
pub fn sim_problems(corpus: Vec<CorpusProblem>, route: &RouteOptions) -> Result<Vec<SimProblem>, SimError> {
    corpus.into_iter().filter(|p| p.template.is_some()).map(|p| SimProblem::new(p, route.clone())).collect()
}
