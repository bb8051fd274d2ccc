//! Earliest semantic divergence between a candidate and the reference.
//!
//! Both programs are executed on the same failing input. The traces are
//! walked together: events at sites the alignment does not cover are
//! skipped, every other candidate event is paired positionally with the next
//! covered reference event. A pair diverges when the sites do not
//! correspond (control divergence) or a mapped variable differs. When one
//! trace runs out first, or both finish with different outcomes, the
//! candidate's next or last event is the divergence.

mod align;
mod external;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_programs, align_traces, Alignment};
pub use external::{ExternalLocalizer, LocalizeRequest, LocalizeResponse, DEFAULT_TIMEOUT};

use crate::cfg::{comparable, similarity, Thresholds};
use crate::exec::{Event, Outcome, Trace, Value};
use crate::syntax::TokenRange;
use crate::Program;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("candidate is not comparable with the reference (ast {ast:.3}, cfg {cfg:.3})")]
    Incomparable { ast: f64, cfg: f64 },
}

/// Align two programs, refusing pairs that fail the comparability gate.
pub fn align(candidate: &Program, reference: &Program, thresholds: Thresholds) -> Result<Alignment, DivergenceError> {
    let score = similarity(candidate, reference);
    if !comparable(score, thresholds) {
        return Err(DivergenceError::Incomparable { ast: score.ast_score, cfg: score.cfg_score });
    }
    Ok(align_programs(candidate, reference))
}

/// Two traces of the same input plus the static alignment between them.
#[derive(Debug, Clone, Copy)]
pub struct AlignedPair<'a> {
    pub candidate: &'a Trace,
    pub reference: &'a Trace,
    pub alignment: &'a Alignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableMismatch {
    pub candidate: String,
    pub reference: String,
    /// `None` when the variable is unbound on that side.
    pub candidate_value: Option<Value>,
    pub reference_value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mismatch {
    State {
        reference_k: usize,
        variables: Vec<VariableMismatch>,
    },
    ControlPath {
        reference_k: usize,
        candidate_site: TokenRange,
        reference_site: TokenRange,
        variables: Vec<VariableMismatch>,
    },
    /// The reference finished while the candidate kept executing.
    ReferenceEnded,
    /// The candidate stopped while the reference kept executing.
    CandidateEnded { reference_next_site: TokenRange },
    Outcome { candidate: Outcome, reference: Outcome },
    /// Reported by an external localizer.
    External,
}

impl Mismatch {
    pub fn variables(&self) -> &[VariableMismatch] {
        match self {
            Mismatch::State { variables, .. } | Mismatch::ControlPath { variables, .. } => variables,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// 1-based index into the candidate trace.
    pub k_star: usize,
    pub token_span: TokenRange,
    pub mismatch: Mismatch,
    pub confidence: f64,
    /// Candidate state at `k_star`.
    pub context: BTreeMap<String, Value>,
}

fn compare_states(alignment: &Alignment, c: &Event, r: &Event) -> Vec<VariableMismatch> {
    alignment
        .variable_map
        .iter()
        .filter_map(|(cn, rn)| {
            let (cv, rv) = (c.state.get(cn), r.state.get(rn));
            (cv != rv).then(|| VariableMismatch {
                candidate: cn.clone(),
                reference: rn.clone(),
                candidate_value: cv.cloned(),
                reference_value: rv.cloned(),
            })
        })
        .collect()
}

/// Runtime errors agree on their message; their spans live in different
/// programs.
fn outcomes_agree(c: &Outcome, r: &Outcome) -> bool {
    match (c, r) {
        (Outcome::RuntimeError(a), Outcome::RuntimeError(b)) => a.message == b.message,
        _ => c == r,
    }
}

/// Span credited for a divergence at candidate event `k`.
///
/// A control divergence is caused by the decision taken just before it, so
/// when the previous event is a branch or loop header, that header gets the
/// credit; otherwise the event's own statement does.
fn credited_span(pair: &AlignedPair<'_>, k: usize, control: bool) -> TokenRange {
    let events = &pair.candidate.events;
    if control && k >= 2 {
        let prev = &events[k - 2];
        if pair.alignment.decision_sites.contains(&prev.span) {
            return prev.span;
        }
    }
    events[k - 1].span
}

fn divergence_at(pair: &AlignedPair<'_>, k: usize, mismatch: Mismatch) -> Divergence {
    let control = matches!(mismatch, Mismatch::ControlPath { .. });
    Divergence {
        k_star: k,
        token_span: credited_span(pair, k, control),
        mismatch,
        confidence: 1.0,
        context: pair.candidate.events[k - 1].state.clone(),
    }
}

/// Every divergence the walk finds, in increasing `k`. With `stop_early`
/// only the first is produced.
fn walk(pair: &AlignedPair<'_>, stop_early: bool) -> Vec<Divergence> {
    let (cand, refr) = (&pair.candidate.events, &pair.reference.events);
    let ref_sites = pair.alignment.reference_sites();
    let mut found = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        while i < cand.len() && !pair.alignment.site_map.contains_key(&cand[i].span) {
            i += 1;
        }
        while j < refr.len() && !ref_sites.contains(&refr[j].span) {
            j += 1;
        }
        match (i < cand.len(), j < refr.len()) {
            (false, false) => {
                if !outcomes_agree(&pair.candidate.outcome, &pair.reference.outcome) && !cand.is_empty() {
                    let mismatch = Mismatch::Outcome {
                        candidate: pair.candidate.outcome.clone(),
                        reference: pair.reference.outcome.clone(),
                    };
                    let k = cand.len();
                    if found.last().is_none_or(|d: &Divergence| d.k_star < k) {
                        found.push(divergence_at(pair, k, mismatch));
                    }
                }
                return found;
            }
            (true, false) => {
                // Every remaining covered candidate event is past the end of
                // the reference; the first is the divergence and the last
                // event bounds the tail.
                found.push(divergence_at(pair, i + 1, Mismatch::ReferenceEnded));
                if !stop_early && cand.len() > i + 1 {
                    found.push(divergence_at(pair, cand.len(), Mismatch::ReferenceEnded));
                }
                return found;
            }
            (false, true) => {
                if !cand.is_empty() {
                    let k = cand.len();
                    if found.last().is_none_or(|d| d.k_star < k) {
                        found.push(divergence_at(pair, k, Mismatch::CandidateEnded { reference_next_site: refr[j].span }));
                    }
                }
                return found;
            }
            (true, true) if i + 1 == cand.len() && matches!(pair.candidate.outcome, Outcome::RuntimeError(_)) => {
                // The failing statement never completed; its snapshot is the
                // state before it ran.
                found.push(divergence_at(pair, i + 1, Mismatch::CandidateEnded { reference_next_site: refr[j].span }));
                return found;
            }
            (true, true) => {
                let (c, r) = (&cand[i], &refr[j]);
                let variables = compare_states(pair.alignment, c, r);
                let mapped = pair.alignment.site_map[&c.span];
                let mismatch = if mapped != r.span {
                    Some(Mismatch::ControlPath {
                        reference_k: j + 1,
                        candidate_site: c.span,
                        reference_site: r.span,
                        variables,
                    })
                } else if !variables.is_empty() {
                    Some(Mismatch::State { reference_k: j + 1, variables })
                } else {
                    None
                };
                if let Some(m) = mismatch {
                    found.push(divergence_at(pair, i + 1, m));
                    if stop_early {
                        return found;
                    }
                }
                i += 1;
                j += 1;
            }
        }
    }
}

/// The earliest divergence, or `None` when the traces agree everywhere.
pub fn earliest_divergence(pair: &AlignedPair<'_>) -> Option<Divergence> {
    walk(pair, true).into_iter().next()
}

/// The latest divergence under the same pairing.
pub fn last_divergence(pair: &AlignedPair<'_>) -> Option<Divergence> {
    walk(pair, false).into_iter().max_by_key(|d| d.k_star)
}

/// Where `k*` comes from.
#[derive(Debug, Clone, Default)]
pub enum LocalizerBackend {
    #[default]
    Heuristic,
    External(ExternalLocalizer),
}

impl LocalizerBackend {
    pub fn name(&self) -> &'static str {
        match self {
            LocalizerBackend::Heuristic => "heuristic",
            LocalizerBackend::External(_) => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub divergence: Option<Divergence>,
    /// Why the external answer was discarded, if it was.
    pub fallback: Option<String>,
}

/// Context the external localizer receives besides the traces.
#[derive(Debug, Clone, Copy)]
pub struct LocalizeContext<'a> {
    pub candidate_source: &'a str,
    pub reference_source: &'a str,
    pub failing_input: &'a [Value],
}

/// Localize with `backend`, falling back to the heuristic whenever the
/// external answer is unavailable or invalid.
pub fn localize(pair: &AlignedPair<'_>, backend: &LocalizerBackend, ctx: LocalizeContext<'_>) -> Localization {
    let heuristic = earliest_divergence(pair);
    let LocalizerBackend::External(client) = backend else {
        return Localization { divergence: heuristic, fallback: None };
    };
    let request = LocalizeRequest {
        candidate_source: ctx.candidate_source.to_string(),
        reference_source: ctx.reference_source.to_string(),
        candidate_trace: pair.candidate.to_jsonl(),
        reference_trace: pair.reference.to_jsonl(),
        failing_input: ctx.failing_input.to_vec(),
    };
    let reason = match client.query(&request) {
        Ok(resp) => match validate(pair, &resp) {
            Ok(d) => return Localization { divergence: Some(d), fallback: None },
            Err(reason) => reason,
        },
        Err(e) => e.to_string(),
    };
    log::warn!("external localizer unusable, using heuristic: {reason}");
    Localization { divergence: heuristic, fallback: Some(reason) }
}

fn validate(pair: &AlignedPair<'_>, resp: &LocalizeResponse) -> Result<Divergence, String> {
    let k_max = pair.candidate.len();
    if resp.k_star < 1 || resp.k_star as usize > k_max {
        return Err(format!("k_star {} outside [1, {k_max}]", resp.k_star));
    }
    if !resp.confidence.is_finite() {
        return Err("non-finite confidence".into());
    }
    let k = resp.k_star as usize;
    let mut d = divergence_at(pair, k, Mismatch::External);
    d.confidence = resp.confidence.clamp(0.0, 1.0);
    Ok(d)
}

#[cfg(test)]
mod tests;
