//! Structural constraints on candidate programs.
//!
//! Constraints are checkable from the AST alone: they never execute code
//! and never refer to token positions. A rule-based extractor derives a
//! constraint set from the canonical reference; the same set renders to a
//! prompt suffix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{NodeId, NodeKind};
use crate::Program;

/// Node classes that `forbid-node-kind` / `require-node-kind` may name.
pub const NODE_CLASSES: &[&str] = &[
    "assign", "aug-assign", "if", "while", "for-range", "return", "expr-stmt", "pass", "binop", "unary",
    "boolop", "compare", "call", "index", "list",
];

pub const BUILTINS: &[&str] = &["len", "max", "min", "abs", "range", "append"];

/// The derived ordering (variant, then argument) is the rendering order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "kebab-case")]
pub enum Constraint {
    ForbidNodeKind(String),
    RequireNodeKind(String),
    MaxLoopDepth(usize),
    ForbidRecursion,
    RequireRecursion,
    MaxTokenCount(usize),
    RequireBuiltin(String),
    ForbidBuiltin(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("unknown node kind `{0}`")]
    UnknownNodeKind(String),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("reference violates its own extracted constraints: {0:?}")]
    SelfInconsistent(Vec<Constraint>),
}

impl Constraint {
    pub fn rendered_text(&self) -> String {
        match self {
            Constraint::ForbidNodeKind(k) => format!("Do not use `{k}` constructs."),
            Constraint::RequireNodeKind(k) => format!("Use at least one `{k}` construct."),
            Constraint::MaxLoopDepth(0) => "Do not use loops.".into(),
            Constraint::MaxLoopDepth(n) => format!("Loop nesting depth must not exceed {n}."),
            Constraint::ForbidRecursion => "Do not use recursion.".into(),
            Constraint::RequireRecursion => "Solve the problem recursively.".into(),
            Constraint::MaxTokenCount(n) => format!("Keep the solution within {n} tokens."),
            Constraint::RequireBuiltin(b) => format!("Use the builtin `{b}`."),
            Constraint::ForbidBuiltin(b) => format!("Do not call the builtin `{b}`."),
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        match self {
            Constraint::ForbidNodeKind(k) | Constraint::RequireNodeKind(k) if !NODE_CLASSES.contains(&k.as_str()) => {
                Err(ConstraintError::UnknownNodeKind(k.clone()))
            }
            Constraint::RequireBuiltin(b) | Constraint::ForbidBuiltin(b) if !BUILTINS.contains(&b.as_str()) => {
                Err(ConstraintError::UnknownBuiltin(b.clone()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Index into the checked constraint list.
    pub constraint: usize,
    pub node: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintVerdict {
    pub satisfied: bool,
    pub violations: Vec<Violation>,
}

impl ConstraintVerdict {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ConstraintVerdict { satisfied: violations.is_empty(), violations }
    }
}

/// Check a program against every constraint.
pub fn check(program: &Program, constraints: &[Constraint]) -> ConstraintVerdict {
    let violations = constraints
        .iter()
        .enumerate()
        .filter_map(|(i, c)| violation(program, c).map(|node| Violation { constraint: i, node }))
        .collect();
    ConstraintVerdict::from_violations(violations)
}

/// `None` if satisfied; otherwise the offending node, if one exists.
fn violation(program: &Program, c: &Constraint) -> Option<Option<NodeId>> {
    let ast = program.ast();
    let first_of = |class: &str| ast.nodes().find(|(_, n)| n.kind.class() == class).map(|(id, _)| id);
    let first_call = |name: &str| {
        ast.nodes().find(|(_, n)| matches!(&n.kind, NodeKind::Call(c) if c == name)).map(|(id, _)| id)
    };
    match c {
        Constraint::ForbidNodeKind(k) => first_of(k).map(Some),
        Constraint::RequireNodeKind(k) => first_of(k).is_none().then_some(None),
        Constraint::MaxLoopDepth(bound) => {
            let deep = ast.ids().find(|&id| ast.loop_depth_at(id) > *bound)?;
            // Report the outermost loop of the offending nest.
            let mut outer = None;
            let mut cur = Some(deep);
            while let Some(id) = cur {
                if ast.node(id).kind.is_loop() {
                    outer = Some(id);
                }
                cur = ast.node(id).parent;
            }
            Some(outer)
        }
        Constraint::ForbidRecursion => ast.self_calls().first().map(|&id| Some(id)),
        Constraint::RequireRecursion => ast.self_calls().is_empty().then_some(None),
        Constraint::MaxTokenCount(n) => (program.token_count() > *n).then_some(None),
        Constraint::RequireBuiltin(b) => first_call(b).is_none().then_some(None),
        Constraint::ForbidBuiltin(b) => {
            if b == "range" {
                // `for ... in range(...)` uses the builtin without a call node.
                let in_for = ast.nodes().find(|(_, n)| matches!(n.kind, NodeKind::ForRange { .. })).map(|(id, _)| id);
                if let Some(id) = first_call(b).or(in_for) {
                    return Some(Some(id));
                }
                return None;
            }
            first_call(b).map(Some)
        }
    }
}

/// Derive constraints from the canonical reference.
///
/// Rules: loop nesting bounded by the reference's depth, recursion mirrored
/// (forbidden unless the reference recurses), each loop form the reference
/// uses required, and a token budget of twice the reference length. The
/// result is sorted and always satisfied by the reference.
pub fn extract(reference: &Program) -> Result<Vec<Constraint>, ConstraintError> {
    let ast = reference.ast();
    let mut out = vec![Constraint::MaxLoopDepth(ast.max_loop_depth())];
    out.push(if ast.self_calls().is_empty() { Constraint::ForbidRecursion } else { Constraint::RequireRecursion });
    for class in ["for-range", "while"] {
        if ast.nodes().any(|(_, n)| n.kind.class() == class) {
            out.push(Constraint::RequireNodeKind(class.into()));
        }
    }
    out.push(Constraint::MaxTokenCount(2 * reference.token_count()));
    out.sort();
    out.dedup();
    let verdict = check(reference, &out);
    if !verdict.satisfied {
        let broken = verdict.violations.iter().map(|v| out[v.constraint].clone()).collect();
        return Err(ConstraintError::SelfInconsistent(broken));
    }
    Ok(out)
}

/// Render constraints as a prompt suffix, one bullet per constraint in a
/// stable order. The empty set renders to the empty string.
pub fn render_suffix(constraints: &[Constraint]) -> String {
    let mut sorted: Vec<&Constraint> = constraints.iter().collect();
    sorted.sort();
    sorted.dedup();
    sorted.iter().map(|c| format!("- {}", c.rendered_text())).collect::<Vec<_>>().join("\n")
}
