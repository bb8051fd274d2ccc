//! Recursive-descent parser for MiniLang.
//!
//! Tokens are first grouped into logical lines (a physical line, extended
//! while brackets are open). Block structure comes from each line's
//! indentation, which must grow by exactly two spaces per level.

use super::ast::{Ast, BinOp, BoolOp, CmpOp, Node, NodeId, NodeKind, UnaryOp};
use super::lexer::{Token, TokenKind};
use super::{SyntaxDiagnostic, TokenRange};
use std::cell::Cell;

const INDENT: u32 = 2;
const MAX_EXPR_DEPTH: usize = 100;

#[derive(Debug, Clone, Copy)]
struct Line {
    start: usize,
    end: usize,
    indent: u32,
}

/// Tree built during parsing, flattened into an [`Ast`] afterwards.
struct Raw {
    kind: NodeKind,
    children: Vec<Raw>,
    first: usize,
    last: usize,
    head: Option<(usize, usize)>,
}

impl Raw {
    fn new(kind: NodeKind, children: Vec<Raw>, first: usize, last: usize) -> Self {
        Raw { kind, children, first, last, head: None }
    }
}

type PResult<T> = Result<T, SyntaxDiagnostic>;

/// Parse a token stream into an AST.
pub fn parse(tokens: &[Token]) -> PResult<Ast> {
    if tokens.is_empty() {
        return Err(SyntaxDiagnostic::new(
            "empty program",
            super::ByteSpan::new(0, 0),
            TokenRange::single(1),
        ));
    }
    let lines = logical_lines(tokens);
    let parser = Parser { tokens, lines, depth: Cell::new(0) };
    let raw = parser.program()?;
    Ok(flatten(raw))
}

fn logical_lines(tokens: &[Token]) -> Vec<Line> {
    let mut lines = Vec::new();
    let mut depth: i32 = 0;
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        let starts_physical = i == 0 || tokens[i - 1].line != tok.line;
        if i > 0 && starts_physical && depth <= 0 {
            lines.push(Line { start, end: i, indent: tokens[start].col });
            start = i;
            depth = 0;
        }
        if tok.kind == TokenKind::Delimiter {
            match tok.text.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                _ => {}
            }
        }
    }
    lines.push(Line { start, end: tokens.len(), indent: tokens[start].col });
    lines
}

fn flatten(raw: Raw) -> Ast {
    fn go(raw: Raw, parent: Option<NodeId>, nodes: &mut Vec<Node>) -> NodeId {
        let id = NodeId(nodes.len());
        let tokens = TokenRange::new(raw.first + 1, raw.last + 1);
        let head = raw.head.map(|(a, b)| TokenRange::new(a + 1, b + 1)).unwrap_or(tokens);
        nodes.push(Node { kind: raw.kind, children: Vec::new(), parent, tokens, head });
        let mut kids = Vec::with_capacity(raw.children.len());
        for child in raw.children {
            kids.push(go(child, Some(id), nodes));
        }
        nodes[id.0].children = kids;
        id
    }
    let mut nodes = Vec::new();
    go(raw, None, &mut nodes);
    Ast::from_nodes(nodes)
}

struct Parser<'t> {
    tokens: &'t [Token],
    lines: Vec<Line>,
    depth: Cell<usize>,
}

/// Cursor over the tokens of one logical line.
struct Cursor {
    pos: usize,
    end: usize,
    last_line: bool,
}

impl<'t> Parser<'t> {
    fn err_at(&self, idx: usize, message: impl Into<String>) -> SyntaxDiagnostic {
        let idx = idx.min(self.tokens.len() - 1);
        SyntaxDiagnostic::new(message, self.tokens[idx].span, TokenRange::single(idx + 1))
    }

    fn err_end(&self, cur: &Cursor, what: &str) -> SyntaxDiagnostic {
        if cur.last_line {
            self.err_at(self.tokens.len() - 1, format!("premature end of input: expected {what}"))
        } else {
            self.err_at(cur.end - 1, format!("unexpected end of line: expected {what}"))
        }
    }

    fn cursor(&self, line: usize) -> Cursor {
        let l = self.lines[line];
        Cursor { pos: l.start, end: l.end, last_line: line + 1 == self.lines.len() }
    }

    fn peek<'a>(&'a self, cur: &Cursor) -> Option<&'a Token> {
        (cur.pos < cur.end).then(|| &self.tokens[cur.pos])
    }

    fn expect(&self, cur: &mut Cursor, kind: TokenKind, text: &str) -> PResult<usize> {
        match self.peek(cur) {
            Some(t) if t.is(kind, text) => {
                cur.pos += 1;
                Ok(cur.pos - 1)
            }
            Some(t) => Err(self.err_at(cur.pos, format!("expected `{text}`, found `{}`", t.text))),
            None => Err(self.err_end(cur, &format!("`{text}`"))),
        }
    }

    fn expect_ident(&self, cur: &mut Cursor) -> PResult<(usize, String)> {
        match self.peek(cur) {
            Some(t) if t.kind == TokenKind::Identifier => {
                cur.pos += 1;
                Ok((cur.pos - 1, t.text.clone()))
            }
            Some(t) => Err(self.err_at(cur.pos, format!("expected identifier, found `{}`", t.text))),
            None => Err(self.err_end(cur, "identifier")),
        }
    }

    fn expect_eol(&self, cur: &Cursor) -> PResult<()> {
        match self.peek(cur) {
            None => Ok(()),
            Some(t) => Err(self.err_at(cur.pos, format!("unexpected token `{}`", t.text))),
        }
    }

    fn program(&self) -> PResult<Raw> {
        let first = self.lines[0];
        if first.indent != 0 {
            return Err(self.err_at(first.start, "unexpected indent"));
        }
        let mut cur = self.cursor(0);
        if !self.tokens[first.start].is_kw("def") {
            // Surface errors inside the stray statement first.
            self.statement(0, 0)?;
            return Err(self.err_at(first.start, "program must start with a function definition"));
        }
        let (def, next) = self.function_def(&mut cur, 0)?;
        if next < self.lines.len() {
            let l = self.lines[next];
            let msg = if l.indent == 0 {
                "only one top-level function definition is allowed"
            } else {
                "unexpected indent"
            };
            return Err(self.err_at(l.start, msg));
        }
        Ok(def)
    }

    fn function_def(&self, cur: &mut Cursor, line: usize) -> PResult<(Raw, usize)> {
        let start = cur.pos;
        cur.pos += 1; // `def`
        let (_, name) = self.expect_ident(cur)?;
        self.expect(cur, TokenKind::Delimiter, "(")?;
        let mut params = Vec::new();
        if !matches!(self.peek(cur), Some(t) if t.is_delim(")")) {
            loop {
                let (idx, p) = self.expect_ident(cur)?;
                if params.contains(&p) {
                    return Err(self.err_at(idx, format!("duplicate parameter `{p}`")));
                }
                params.push(p);
                if matches!(self.peek(cur), Some(t) if t.is_delim(",")) {
                    cur.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(cur, TokenKind::Delimiter, ")")?;
        let colon = self.expect(cur, TokenKind::Delimiter, ":")?;
        self.expect_eol(cur)?;
        let (body, next) = self.block_after(line, cur, 0)?;
        let last = body.last;
        let mut node = Raw::new(NodeKind::FunctionDef { name, params }, vec![body], start, last);
        node.head = Some((start, colon));
        Ok((node, next))
    }

    /// Parse the indented block following the header on `line`.
    fn block_after(&self, line: usize, cur: &Cursor, indent: u32) -> PResult<(Raw, usize)> {
        let next = line + 1;
        if next >= self.lines.len() {
            return Err(self.err_end(cur, "an indented block"));
        }
        let l = self.lines[next];
        if l.indent <= indent {
            return Err(self.err_at(l.start, "expected an indented block"));
        }
        if l.indent != indent + INDENT {
            return Err(self.err_at(l.start, "indentation must increase by exactly 2 spaces"));
        }
        self.block(next, l.indent)
    }

    fn block(&self, mut line: usize, indent: u32) -> PResult<(Raw, usize)> {
        let mut stmts = Vec::new();
        while line < self.lines.len() {
            let l = self.lines[line];
            if l.indent < indent {
                break;
            }
            if l.indent > indent {
                return Err(self.err_at(l.start, "unexpected indent"));
            }
            let (stmt, next) = self.statement(line, indent)?;
            stmts.push(stmt);
            line = next;
        }
        let first = stmts.first().map(|s| s.first).unwrap_or(0);
        let last = stmts.last().map(|s| s.last).unwrap_or(0);
        Ok((Raw::new(NodeKind::Block, stmts, first, last), line))
    }

    fn statement(&self, line: usize, indent: u32) -> PResult<(Raw, usize)> {
        let mut cur = self.cursor(line);
        let start = cur.pos;
        let tok = &self.tokens[start];
        if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "def" => return Err(self.err_at(start, "nested function definitions are not supported")),
                "return" => {
                    cur.pos += 1;
                    if self.peek(&cur).is_none() {
                        return Err(self.err_end(&cur, "a return value"));
                    }
                    let value = self.expr(&mut cur)?;
                    self.expect_eol(&cur)?;
                    let last = value.last;
                    return Ok((Raw::new(NodeKind::Return, vec![value], start, last), line + 1));
                }
                "pass" => {
                    cur.pos += 1;
                    self.expect_eol(&cur)?;
                    return Ok((Raw::new(NodeKind::Pass, vec![], start, start), line + 1));
                }
                "if" => return self.if_stmt(line, indent, &mut cur),
                "while" => {
                    cur.pos += 1;
                    let cond = self.expr(&mut cur)?;
                    let colon = self.expect(&mut cur, TokenKind::Delimiter, ":")?;
                    self.expect_eol(&cur)?;
                    let (body, next) = self.block_after(line, &cur, indent)?;
                    let last = body.last;
                    let mut node = Raw::new(NodeKind::While, vec![cond, body], start, last);
                    node.head = Some((start, colon));
                    return Ok((node, next));
                }
                "for" => return self.for_stmt(line, indent, &mut cur),
                "elif" | "else" => {
                    return Err(self.err_at(start, format!("`{}` without matching `if`", tok.text)))
                }
                _ => {}
            }
        }
        let target = self.expr(&mut cur)?;
        let kind = match self.peek(&cur) {
            None => {
                let last = target.last;
                return Ok((Raw::new(NodeKind::ExprStmt, vec![target], start, last), line + 1));
            }
            Some(t) if t.is_op("=") => NodeKind::Assign,
            Some(t) if t.is_op("+=") => NodeKind::AugAssign(BinOp::Add),
            Some(t) if t.is_op("-=") => NodeKind::AugAssign(BinOp::Sub),
            Some(t) if t.is_op("*=") => NodeKind::AugAssign(BinOp::Mul),
            Some(t) => return Err(self.err_at(cur.pos, format!("unexpected token `{}`", t.text))),
        };
        if !is_assignable(&target) {
            return Err(self.err_at(target.first, "invalid assignment target"));
        }
        cur.pos += 1;
        if self.peek(&cur).is_none() {
            return Err(self.err_end(&cur, "an expression"));
        }
        let value = self.expr(&mut cur)?;
        self.expect_eol(&cur)?;
        let last = value.last;
        Ok((Raw::new(kind, vec![target, value], start, last), line + 1))
    }

    fn if_stmt(&self, line: usize, indent: u32, cur: &mut Cursor) -> PResult<(Raw, usize)> {
        let start = cur.pos;
        cur.pos += 1; // `if` or `elif`
        let cond = self.expr(cur)?;
        let colon = self.expect(cur, TokenKind::Delimiter, ":")?;
        self.expect_eol(cur)?;
        let (body, mut next) = self.block_after(line, cur, indent)?;
        let mut children = vec![cond, body];
        if next < self.lines.len() && self.lines[next].indent == indent {
            let l = self.lines[next];
            let head = &self.tokens[l.start];
            if head.is_kw("elif") {
                let mut c = self.cursor(next);
                let (nested, after) = self.if_stmt(next, indent, &mut c)?;
                let (f, la) = (nested.first, nested.last);
                children.push(Raw::new(NodeKind::Block, vec![nested], f, la));
                next = after;
            } else if head.is_kw("else") {
                let mut c = self.cursor(next);
                c.pos += 1;
                self.expect(&mut c, TokenKind::Delimiter, ":")?;
                self.expect_eol(&c)?;
                let (orelse, after) = self.block_after(next, &c, indent)?;
                // The else block owns the `else :` tokens.
                let mut orelse = orelse;
                orelse.first = l.start;
                children.push(orelse);
                next = after;
            }
        }
        let last = children.last().map(|c| c.last).unwrap_or(colon);
        let mut node = Raw::new(NodeKind::If, children, start, last);
        node.head = Some((start, colon));
        Ok((node, next))
    }

    fn for_stmt(&self, line: usize, indent: u32, cur: &mut Cursor) -> PResult<(Raw, usize)> {
        let start = cur.pos;
        cur.pos += 1;
        let (_, var) = self.expect_ident(cur)?;
        self.expect(cur, TokenKind::Keyword, "in")?;
        match self.peek(cur) {
            Some(t) if t.is(TokenKind::Identifier, "range") => cur.pos += 1,
            Some(t) => {
                return Err(self.err_at(cur.pos, format!("expected `range`, found `{}`", t.text)))
            }
            None => return Err(self.err_end(cur, "`range`")),
        }
        self.expect(cur, TokenKind::Delimiter, "(")?;
        let mut args = vec![self.expr(cur)?];
        if matches!(self.peek(cur), Some(t) if t.is_delim(",")) {
            cur.pos += 1;
            args.push(self.expr(cur)?);
        }
        self.expect(cur, TokenKind::Delimiter, ")")?;
        let colon = self.expect(cur, TokenKind::Delimiter, ":")?;
        self.expect_eol(cur)?;
        let (body, next) = self.block_after(line, cur, indent)?;
        let last = body.last;
        args.push(body);
        let mut node = Raw::new(NodeKind::ForRange { var }, args, start, last);
        node.head = Some((start, colon));
        Ok((node, next))
    }

    // ---- expressions ----

    fn expr(&self, cur: &mut Cursor) -> PResult<Raw> {
        let depth = self.depth.get() + 1;
        if depth > MAX_EXPR_DEPTH {
            return Err(self.err_at(cur.pos, "expression nested too deeply"));
        }
        self.depth.set(depth);
        let out = self.or_expr(cur);
        self.depth.set(depth - 1);
        out
    }

    fn nested(&self, cur: &mut Cursor, f: fn(&Self, &mut Cursor) -> PResult<Raw>) -> PResult<Raw> {
        let depth = self.depth.get() + 1;
        if depth > MAX_EXPR_DEPTH {
            return Err(self.err_at(cur.pos, "expression nested too deeply"));
        }
        self.depth.set(depth);
        let out = f(self, cur);
        self.depth.set(depth - 1);
        out
    }

    fn or_expr(&self, cur: &mut Cursor) -> PResult<Raw> {
        let mut lhs = self.and_expr(cur)?;
        while matches!(self.peek(cur), Some(t) if t.is_kw("or")) {
            cur.pos += 1;
            let rhs = self.and_expr(cur)?;
            let (f, l) = (lhs.first, rhs.last);
            lhs = Raw::new(NodeKind::BoolOp(BoolOp::Or), vec![lhs, rhs], f, l);
        }
        Ok(lhs)
    }

    fn and_expr(&self, cur: &mut Cursor) -> PResult<Raw> {
        let mut lhs = self.not_expr(cur)?;
        while matches!(self.peek(cur), Some(t) if t.is_kw("and")) {
            cur.pos += 1;
            let rhs = self.not_expr(cur)?;
            let (f, l) = (lhs.first, rhs.last);
            lhs = Raw::new(NodeKind::BoolOp(BoolOp::And), vec![lhs, rhs], f, l);
        }
        Ok(lhs)
    }

    fn not_expr(&self, cur: &mut Cursor) -> PResult<Raw> {
        if matches!(self.peek(cur), Some(t) if t.is_kw("not")) {
            let start = cur.pos;
            cur.pos += 1;
            let operand = self.nested(cur, Self::not_expr)?;
            let last = operand.last;
            return Ok(Raw::new(NodeKind::Unary(UnaryOp::Not), vec![operand], start, last));
        }
        self.comparison(cur)
    }

    fn cmp_op(&self, cur: &Cursor) -> Option<CmpOp> {
        self.peek(cur)
            .filter(|t| t.kind == TokenKind::Operator)
            .and_then(|t| CmpOp::from_symbol(&t.text))
    }

    fn comparison(&self, cur: &mut Cursor) -> PResult<Raw> {
        let lhs = self.arith(cur)?;
        let Some(op) = self.cmp_op(cur) else { return Ok(lhs) };
        cur.pos += 1;
        let rhs = self.arith(cur)?;
        if self.cmp_op(cur).is_some() {
            return Err(self.err_at(cur.pos, "chained comparisons are not supported"));
        }
        let (f, l) = (lhs.first, rhs.last);
        Ok(Raw::new(NodeKind::Compare(op), vec![lhs, rhs], f, l))
    }

    fn arith(&self, cur: &mut Cursor) -> PResult<Raw> {
        let mut lhs = self.term(cur)?;
        loop {
            let op = match self.peek(cur) {
                Some(t) if t.is_op("+") => BinOp::Add,
                Some(t) if t.is_op("-") => BinOp::Sub,
                _ => break,
            };
            cur.pos += 1;
            let rhs = self.term(cur)?;
            let (f, l) = (lhs.first, rhs.last);
            lhs = Raw::new(NodeKind::BinOp(op), vec![lhs, rhs], f, l);
        }
        Ok(lhs)
    }

    fn term(&self, cur: &mut Cursor) -> PResult<Raw> {
        let mut lhs = self.unary(cur)?;
        loop {
            let op = match self.peek(cur) {
                Some(t) if t.is_op("*") => BinOp::Mul,
                Some(t) if t.is_op("//") => BinOp::FloorDiv,
                Some(t) if t.is_op("%") => BinOp::Mod,
                _ => break,
            };
            cur.pos += 1;
            let rhs = self.unary(cur)?;
            let (f, l) = (lhs.first, rhs.last);
            lhs = Raw::new(NodeKind::BinOp(op), vec![lhs, rhs], f, l);
        }
        Ok(lhs)
    }

    fn unary(&self, cur: &mut Cursor) -> PResult<Raw> {
        if matches!(self.peek(cur), Some(t) if t.is_op("-")) {
            let start = cur.pos;
            cur.pos += 1;
            let operand = self.nested(cur, Self::unary)?;
            let last = operand.last;
            return Ok(Raw::new(NodeKind::Unary(UnaryOp::Neg), vec![operand], start, last));
        }
        self.postfix(cur)
    }

    fn postfix(&self, cur: &mut Cursor) -> PResult<Raw> {
        let mut base = self.atom(cur)?;
        while matches!(self.peek(cur), Some(t) if t.is_delim("[")) {
            cur.pos += 1;
            let index = self.expr(cur)?;
            let close = self.expect(cur, TokenKind::Delimiter, "]")?;
            let first = base.first;
            base = Raw::new(NodeKind::Index, vec![base, index], first, close);
        }
        Ok(base)
    }

    fn atom(&self, cur: &mut Cursor) -> PResult<Raw> {
        let Some(tok) = self.peek(cur) else {
            return Err(self.err_end(cur, "an expression"));
        };
        let start = cur.pos;
        match tok.kind {
            TokenKind::Identifier => {
                cur.pos += 1;
                if matches!(self.peek(cur), Some(t) if t.is_delim("(")) {
                    cur.pos += 1;
                    let (args, close) = self.sequence(cur, ")")?;
                    return Ok(Raw::new(NodeKind::Call(tok.text.clone()), args, start, close));
                }
                Ok(Raw::new(NodeKind::Name(tok.text.clone()), vec![], start, start))
            }
            TokenKind::Integer => {
                cur.pos += 1;
                let v = tok.text.parse::<i64>().map_err(|_| self.err_at(start, "integer literal out of range"))?;
                Ok(Raw::new(NodeKind::Int(v), vec![], start, start))
            }
            TokenKind::Boolean => {
                cur.pos += 1;
                Ok(Raw::new(NodeKind::Bool(tok.text == "True"), vec![], start, start))
            }
            TokenKind::Delimiter if tok.text == "[" => {
                cur.pos += 1;
                let (elems, close) = self.sequence(cur, "]")?;
                Ok(Raw::new(NodeKind::List, elems, start, close))
            }
            TokenKind::Delimiter if tok.text == "(" => {
                cur.pos += 1;
                let inner = self.expr(cur)?;
                self.expect(cur, TokenKind::Delimiter, ")")?;
                Ok(inner)
            }
            _ => Err(self.err_at(start, format!("unexpected token `{}`", tok.text))),
        }
    }

    /// Comma-separated expressions up to `close`; returns the close index.
    fn sequence(&self, cur: &mut Cursor, close: &str) -> PResult<(Vec<Raw>, usize)> {
        let mut items = Vec::new();
        if matches!(self.peek(cur), Some(t) if t.is_delim(close)) {
            cur.pos += 1;
            return Ok((items, cur.pos - 1));
        }
        loop {
            items.push(self.expr(cur)?);
            match self.peek(cur) {
                Some(t) if t.is_delim(",") => cur.pos += 1,
                Some(t) if t.is_delim(close) => {
                    cur.pos += 1;
                    return Ok((items, cur.pos - 1));
                }
                Some(t) => {
                    return Err(self.err_at(cur.pos, format!("expected `,` or `{close}`, found `{}`", t.text)))
                }
                None => return Err(self.err_end(cur, &format!("`{close}`"))),
            }
        }
    }
}

fn is_assignable(target: &Raw) -> bool {
    match &target.kind {
        NodeKind::Name(_) => true,
        NodeKind::Index => is_assignable(&target.children[0]),
        _ => false,
    }
}
