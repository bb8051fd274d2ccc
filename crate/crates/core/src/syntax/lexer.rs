//! Lexer for MiniLang.
//!
//! Newlines, indentation and `#` comments are trivia: they never become
//! tokens, but every token records its line and column so the parser can
//! recover block structure from indentation.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ByteSpan, SyntaxDiagnostic, TokenRange};

/// Maximum accepted source size in bytes.
pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

const KEYWORDS: &[&str] = &[
    "def", "return", "if", "elif", "else", "while", "for", "in", "and", "or", "not", "pass",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Identifier,
    Integer,
    Boolean,
    Operator,
    Keyword,
    Delimiter,
    /// Produced only by [`tokenize_lossy`] for bytes that cannot be lexed.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: ByteSpan,
    /// 1-based source line.
    pub line: u32,
    /// Byte column of the token start within its line.
    pub col: u32,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_op(&self, text: &str) -> bool {
        self.is(TokenKind::Operator, text)
    }

    pub fn is_kw(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }

    pub fn is_delim(&self, text: &str) -> bool {
        self.is(TokenKind::Delimiter, text)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?} {}", self.kind, self.text, self.span)
    }
}

#[derive(Debug)]
struct LexError {
    message: String,
    span: ByteSpan,
}

/// Lex `source` into tokens, failing on the first unlexable byte.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxDiagnostic> {
    if source.len() > MAX_SOURCE_BYTES {
        return Err(SyntaxDiagnostic::new(
            format!("source exceeds {MAX_SOURCE_BYTES} bytes"),
            ByteSpan::new(MAX_SOURCE_BYTES, source.len()),
            TokenRange::single(1),
        ));
    }
    let mut tokens = Vec::new();
    let mut lexer = Lexer::new(source);
    loop {
        match lexer.next_token() {
            Ok(Some(tok)) => tokens.push(tok),
            Ok(None) => break,
            Err(e) => {
                // The diagnostic points at a synthetic token that would follow
                // everything lexed so far.
                let idx = tokens.len() + 1;
                return Err(SyntaxDiagnostic::new(e.message, e.span, TokenRange::single(idx)));
            }
        }
    }
    if tokens.is_empty() {
        return Err(SyntaxDiagnostic::new(
            "empty program",
            ByteSpan::new(0, source.len()),
            TokenRange::single(1),
        ));
    }
    Ok(tokens)
}

/// Lex `source` without failing: unlexable runs become [`TokenKind::Error`]
/// tokens. Used to count tokens of programs that do not lex.
pub fn tokenize_lossy(source: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut lexer = Lexer::new(source);
    loop {
        match lexer.next_token() {
            Ok(Some(tok)) => tokens.push(tok),
            Ok(None) => break,
            Err(e) => {
                let end = e.span.end.max(e.span.start + 1).min(source.len());
                let (line, col) = lexer.line_col(e.span.start);
                tokens.push(Token {
                    kind: TokenKind::Error,
                    text: source[e.span.start..end].to_string(),
                    span: ByteSpan::new(e.span.start, end),
                    line,
                    col,
                });
                lexer.pos = end;
            }
        }
    }
    tokens
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, bytes: src.as_bytes(), pos: 0 }
    }

    fn line_col(&self, offset: usize) -> (u32, u32) {
        let before = &self.src[..offset];
        let line = before.bytes().filter(|&b| b == b'\n').count() as u32 + 1;
        let col = match before.rfind('\n') {
            Some(nl) => offset - nl - 1,
            None => offset,
        };
        (line, col as u32)
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\n' | b'\r' => self.pos += 1,
                b'\t' => {
                    return Err(LexError {
                        message: "tab characters are not allowed".into(),
                        span: ByteSpan::new(self.pos, self.pos + 1),
                    })
                }
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        Ok(())
    }

    fn next_token(&mut self) -> Result<Option<Token>, LexError> {
        self.skip_trivia()?;
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let b = self.bytes[start];
        let kind = if b.is_ascii_alphabetic() || b == b'_' {
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let word = &self.src[start..self.pos];
            if KEYWORDS.contains(&word) {
                TokenKind::Keyword
            } else if word == "True" || word == "False" {
                TokenKind::Boolean
            } else {
                TokenKind::Identifier
            }
        } else if b.is_ascii_digit() {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.src[start..self.pos].parse::<i64>().is_err() {
                return Err(LexError {
                    message: "integer literal out of range".into(),
                    span: ByteSpan::new(start, self.pos),
                });
            }
            TokenKind::Integer
        } else if b == b'"' || b == b'\'' {
            let quote = b;
            self.pos += 1;
            while self.pos < self.bytes.len()
                && self.bytes[self.pos] != quote
                && self.bytes[self.pos] != b'\n'
            {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() || self.bytes[self.pos] != quote {
                return Err(LexError {
                    message: "unterminated literal".into(),
                    span: ByteSpan::new(start, self.pos),
                });
            }
            return Err(LexError {
                message: "string literals are not supported".into(),
                span: ByteSpan::new(start, self.pos + 1),
            });
        } else {
            let rest = &self.bytes[start..];
            let two = if rest.len() >= 2 { &rest[..2] } else { rest };
            let two_char = matches!(
                two,
                b"//" | b"==" | b"!=" | b"<=" | b">=" | b"+=" | b"-=" | b"*="
            );
            if two_char {
                self.pos += 2;
                TokenKind::Operator
            } else {
                match b {
                    b'+' | b'-' | b'*' | b'%' | b'<' | b'>' | b'=' => {
                        self.pos += 1;
                        TokenKind::Operator
                    }
                    b'(' | b')' | b'[' | b']' | b',' | b':' => {
                        self.pos += 1;
                        TokenKind::Delimiter
                    }
                    _ => {
                        let ch = self.src[start..].chars().next().unwrap_or('?');
                        return Err(LexError {
                            message: format!("unexpected character {ch:?}"),
                            span: ByteSpan::new(start, start + ch.len_utf8()),
                        });
                    }
                }
            }
        };
        let (line, col) = self.line_col(start);
        Ok(Some(Token {
            kind,
            text: self.src[start..self.pos].to_string(),
            span: ByteSpan::new(start, self.pos),
            line,
            col,
        }))
    }
}
