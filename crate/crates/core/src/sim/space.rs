use serde::{Deserialize, Serialize};

use crate::syntax::{tokenize, tokenize_lossy, TokenRange};

/// Spaces larger than this are rejected: validation enumerates them.
pub const MAX_ASSIGNMENTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub name: String,
    pub choices: Vec<String>,
    /// Initial logits; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_logits: Option<Vec<f64>>,
}

/// `template.json`: program text with `{{name}}` holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub template: String,
    pub holes: Vec<HoleSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template: {0}")]
pub struct SpaceError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Hole(usize),
}

/// A rendered program and the token span of every hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendering {
    pub source: String,
    pub hole_spans: Vec<TokenRange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSpace {
    segments: Vec<Segment>,
    holes: Vec<HoleSpec>,
}

impl TemplateSpace {
    pub fn new(spec: &TemplateSpec) -> Result<TemplateSpace, SpaceError> {
        let err = |m: String| Err(SpaceError(m));
        if spec.holes.is_empty() {
            return err("no holes".into());
        }
        for (i, h) in spec.holes.iter().enumerate() {
            if spec.holes[..i].iter().any(|o| o.name == h.name) {
                return err(format!("hole `{}` declared twice", h.name));
            }
            if h.choices.is_empty() {
                return err(format!("hole `{}` has no choices", h.name));
            }
            if h.choices.iter().any(|c| c.trim().is_empty() || c.contains('\n')) {
                return err(format!("hole `{}` has an empty or multi-line choice", h.name));
            }
            if let Some(l) = &h.init_logits {
                if l.len() != h.choices.len() || l.iter().any(|x| !x.is_finite()) {
                    return err(format!("hole `{}`: init_logits must be finite, one per choice", h.name));
                }
            }
        }
        let mut segments = Vec::new();
        let mut seen = vec![0usize; spec.holes.len()];
        let mut rest = spec.template.as_str();
        while let Some(open) = rest.find("{{") {
            let Some(close) = rest[open..].find("}}") else {
                return err("unterminated `{{`".into());
            };
            let name = &rest[open + 2..open + close];
            let Some(h) = spec.holes.iter().position(|h| h.name == name) else {
                return err(format!("unknown hole `{name}`"));
            };
            seen[h] += 1;
            segments.push(Segment::Text(rest[..open].to_string()));
            segments.push(Segment::Hole(h));
            rest = &rest[open + close + 2..];
        }
        segments.push(Segment::Text(rest.to_string()));
        if let Some(h) = seen.iter().position(|&n| n != 1) {
            return err(format!("hole `{}` must appear exactly once, found {}", spec.holes[h].name, seen[h]));
        }
        let space = TemplateSpace { segments, holes: spec.holes.clone() };
        if space.size() > MAX_ASSIGNMENTS {
            return err(format!("{} assignments exceed the limit of {MAX_ASSIGNMENTS}", space.size()));
        }
        for a in space.assignments() {
            let r = space.render(&a);
            if let Err(d) = tokenize(&r.source) {
                return err(format!("assignment {a:?} does not lex: {}", d.message));
            }
        }
        Ok(space)
    }

    pub fn holes(&self) -> &[HoleSpec] {
        &self.holes
    }

    /// Number of choice assignments.
    pub fn size(&self) -> usize {
        self.holes.iter().map(|h| h.choices.len()).product()
    }

    /// All assignments in odometer order, last hole fastest.
    pub fn assignments(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(move |mut n| {
            let mut out = vec![0; self.holes.len()];
            for (h, hole) in self.holes.iter().enumerate().rev() {
                out[h] = n % hole.choices.len();
                n /= hole.choices.len();
            }
            out
        })
    }

    pub fn render(&self, assignment: &[usize]) -> Rendering {
        assert_eq!(assignment.len(), self.holes.len(), "one choice per hole");
        let mut source = String::new();
        let mut bytes = vec![(0, 0); self.holes.len()];
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => source.push_str(t),
                Segment::Hole(h) => {
                    let start = source.len();
                    source.push_str(&self.holes[*h].choices[assignment[*h]]);
                    bytes[*h] = (start, source.len());
                }
            }
        }
        let tokens = tokenize_lossy(&source);
        let hole_spans = bytes
            .iter()
            .map(|&(start, end)| {
                let inside: Vec<usize> = tokens
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.span.start >= start && t.span.start < end)
                    .map(|(i, _)| i + 1)
                    .collect();
                match (inside.first(), inside.last()) {
                    (Some(&a), Some(&b)) => TokenRange::new(a, b),
                    // A choice glued to neighbouring text: take the token covering it.
                    _ => {
                        let i = tokens.iter().position(|t| t.span.end > start).unwrap_or(tokens.len().saturating_sub(1));
                        TokenRange::single(i + 1)
                    }
                }
            })
            .collect();
        Rendering { source, hole_spans }
    }
}
