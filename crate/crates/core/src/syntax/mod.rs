//! MiniLang front end: tokens with byte spans, an arena AST, and syntax
//! diagnostics that map onto token-index ranges.

mod ast;
mod lexer;
mod parser;
mod pretty;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{Ast, BinOp, BoolOp, CmpOp, Node, NodeId, NodeKind, UnaryOp};
pub use lexer::{tokenize, tokenize_lossy, Token, TokenKind, MAX_SOURCE_BYTES};
pub use parser::parse;
pub use pretty::pretty_print;

/// Half-open byte range `[start, end)` into the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub end: usize,
}

impl ByteSpan {
    pub fn new(start: usize, end: usize) -> Self {
        ByteSpan { start, end }
    }
}

impl fmt::Display for ByteSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Inclusive, 1-based range of token indices `[first, last]`.
///
/// Serialized as a two-element array, the form used by the trace wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenRange {
    pub first: usize,
    pub last: usize,
}

impl TokenRange {
    pub fn new(first: usize, last: usize) -> Self {
        assert!(first >= 1 && first <= last, "invalid token range [{first}, {last}]");
        TokenRange { first, last }
    }

    pub fn single(index: usize) -> Self {
        TokenRange::new(index, index)
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.first <= index && index <= self.last
    }

    pub fn contains_range(&self, other: TokenRange) -> bool {
        self.first <= other.first && other.last <= self.last
    }

    /// Zero-based vector indices covered by this range.
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first - 1..self.last
    }

    /// Whether the range lies within `[1, token_count]`.
    pub fn within(&self, token_count: usize) -> bool {
        self.last <= token_count
    }
}

impl fmt::Display for TokenRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.first, self.last)
    }
}

impl Serialize for TokenRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.first, self.last].serialize(s)
    }
}

impl<'de> Deserialize<'de> for TokenRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [first, last] = <[usize; 2]>::deserialize(d)?;
        if first < 1 || first > last {
            return Err(serde::de::Error::custom(format!("invalid token range [{first}, {last}]")));
        }
        Ok(TokenRange { first, last })
    }
}

/// A lex, parse or runtime failure with its location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxDiagnostic {
    pub message: String,
    pub span: ByteSpan,
    pub token_range: TokenRange,
}

impl SyntaxDiagnostic {
    pub fn new(message: impl Into<String>, span: ByteSpan, token_range: TokenRange) -> Self {
        SyntaxDiagnostic { message: message.into(), span, token_range }
    }
}

impl fmt::Display for SyntaxDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at bytes {} (tokens {})", self.message, self.span, self.token_range)
    }
}

impl std::error::Error for SyntaxDiagnostic {}

/// Token span that receives credit for a diagnostic, clamped into
/// `[1, token_count]`.
///
/// Lex and parse diagnostics carry the single offending token; runtime
/// diagnostics carry the whole failing statement.
pub fn syntax_span(diag: &SyntaxDiagnostic, token_count: usize) -> TokenRange {
    let t = token_count.max(1);
    let first = diag.token_range.first.clamp(1, t);
    let last = diag.token_range.last.clamp(first, t);
    TokenRange::new(first, last)
}

/// Tokenize and parse in one step.
pub fn parse_source(source: &str) -> Result<Ast, SyntaxDiagnostic> {
    parse(&tokenize(source)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_span_cases() {
        let parse_err = SyntaxDiagnostic::new("x", ByteSpan::new(0, 1), TokenRange::single(5));
        assert_eq!(syntax_span(&parse_err, 20), TokenRange::single(5));
        let runtime = SyntaxDiagnostic::new("division by zero", ByteSpan::new(0, 1), TokenRange::new(10, 17));
        assert_eq!(syntax_span(&runtime, 40), TokenRange::new(10, 17));
        // "x = $": the synthetic error token is the third.
        let lex = tokenize("x = $").unwrap_err();
        assert_eq!(syntax_span(&lex, tokenize_lossy("x = $").len()), TokenRange::single(3));
        // Out-of-range diagnostics are clamped.
        let wide = SyntaxDiagnostic::new("x", ByteSpan::new(0, 1), TokenRange::new(3, 99));
        assert_eq!(syntax_span(&wide, 4), TokenRange::new(3, 4));
    }

    #[test]
    fn token_range_serializes_as_pair() {
        let r = TokenRange::new(7, 8);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[7,8]");
        assert_eq!(serde_json::from_str::<TokenRange>("[7,8]").unwrap(), r);
        assert!(serde_json::from_str::<TokenRange>("[0,8]").is_err());
        assert!(serde_json::from_str::<TokenRange>("[9,8]").is_err());
    }
}
