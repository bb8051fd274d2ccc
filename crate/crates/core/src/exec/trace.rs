use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Value;
use crate::syntax::{ByteSpan, SyntaxDiagnostic, TokenRange};
use crate::Program;

/// One executed statement and the frame state right after it.
///
/// Field order is the wire order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub k: usize,
    pub block: String,
    pub span: TokenRange,
    pub line: u32,
    pub state: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub message: String,
    /// The failing statement.
    pub span: TokenRange,
    pub line: u32,
}

impl RuntimeError {
    /// The error as a diagnostic over the program's source.
    pub fn diagnostic(&self, program: &Program) -> SyntaxDiagnostic {
        let tokens = program.tokens();
        let bytes = match (tokens.get(self.span.first - 1), tokens.get(self.span.last - 1)) {
            (Some(a), Some(b)) => ByteSpan::new(a.span.start, b.span.end),
            _ => ByteSpan::new(0, 0),
        };
        SyntaxDiagnostic::new(self.message.clone(), bytes, self.span)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Outcome {
    Returned { value: Value },
    RuntimeError(RuntimeError),
    FuelExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<Event>,
    pub outcome: Outcome,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct WireError {
    pub line: usize,
    pub reason: String,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn returned(&self) -> Option<&Value> {
        match &self.outcome {
            Outcome::Returned { value } => Some(value),
            _ => None,
        }
    }

    /// Event `k` (1-based).
    pub fn event(&self, k: usize) -> Option<&Event> {
        k.checked_sub(1).and_then(|i| self.events.get(i))
    }

    /// JSON Lines: one event per line, then the outcome line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.outcome).expect("outcomes serialize"));
        out.push('\n');
        out
    }

    /// Parse and validate a JSON Lines trace.
    pub fn from_jsonl(text: &str) -> Result<Trace, WireError> {
        let mut events: Vec<Event> = Vec::new();
        let mut outcome = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |reason: String| WireError { line, reason };
            if raw.trim().is_empty() {
                continue;
            }
            if outcome.is_some() {
                return Err(err("content after the outcome line".into()));
            }
            let json: serde_json::Value = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
            if json.get("outcome").is_some() {
                outcome = Some(serde_json::from_value(json).map_err(|e| err(format!("bad outcome: {e}")))?);
                continue;
            }
            let event: Event = serde_json::from_value(json).map_err(|e| err(format!("bad event: {e}")))?;
            let prev = events.last().map_or(0, |e| e.k);
            if event.k <= prev {
                return Err(err(format!("event index {} does not increase (previous {prev})", event.k)));
            }
            events.push(event);
        }
        let outcome = outcome.ok_or(WireError { line: text.lines().count(), reason: "missing outcome line".into() })?;
        Ok(Trace { events, outcome })
    }
}
