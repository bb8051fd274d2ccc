use std::collections::BTreeMap;

use super::value::{self, Value, MAX_LIST_LEN};
use super::{Event, Outcome, RuntimeError, Trace};
use crate::syntax::{Ast, BoolOp, NodeId, NodeKind, TokenRange, UnaryOp};
use crate::Program;

/// Deepest self-call chain a program may build.
pub const MAX_CALL_DEPTH: usize = 48;

type Frame = BTreeMap<String, Value>;

enum Halt {
    Error(RuntimeError),
    Fuel,
}

/// Failure while evaluating inside a statement: a bare message is located
/// at the enclosing statement, a halt is already located.
enum Fault {
    Msg(String),
    Halt(Halt),
}

impl From<String> for Fault {
    fn from(m: String) -> Self {
        Fault::Msg(m)
    }
}

impl From<Halt> for Fault {
    fn from(h: Halt) -> Self {
        Fault::Halt(h)
    }
}

enum Flow {
    Next,
    Return(Value),
}

pub(super) struct Interpreter<'p> {
    program: &'p Program,
    ast: &'p Ast,
    fuel: usize,
    depth: usize,
    events: Vec<Event>,
}

impl<'p> Interpreter<'p> {
    pub(super) fn new(program: &'p Program, fuel: usize) -> Self {
        Interpreter { program, ast: program.ast(), fuel, depth: 0, events: Vec::new() }
    }

    pub(super) fn run(mut self, args: &[Value]) -> Trace {
        let outcome = match self.call(args) {
            Ok(value) => Outcome::Returned { value },
            Err(Fault::Halt(Halt::Fuel)) => Outcome::FuelExhausted,
            Err(Fault::Halt(Halt::Error(e))) => Outcome::RuntimeError(e),
            Err(Fault::Msg(m)) => Outcome::RuntimeError(self.error_at(NodeId::ROOT, m)),
        };
        Trace { events: self.events, outcome }
    }

    /// Span credited to a statement: the header for compound statements.
    fn stmt_span(&self, id: NodeId) -> TokenRange {
        self.ast.node(id).head
    }

    fn error_at(&self, id: NodeId, message: String) -> RuntimeError {
        let span = self.stmt_span(id);
        let line = self.program.tokens()[span.first - 1].line;
        RuntimeError { message, span, line }
    }

    fn emit(&mut self, id: NodeId, frame: &Frame) -> Result<(), Halt> {
        if self.events.len() >= self.fuel {
            return Err(Halt::Fuel);
        }
        let span = self.stmt_span(id);
        let block = self.program.cfg().block_of(id).map_or_else(|| "B?".to_string(), |b| b.to_string());
        self.events.push(Event {
            k: self.events.len() + 1,
            block,
            span,
            line: self.program.tokens()[span.first - 1].line,
            state: frame.clone(),
        });
        Ok(())
    }

    /// Record the failing statement's event, then halt.
    fn fail(&mut self, id: NodeId, fault: Fault, frame: &Frame) -> Halt {
        match fault {
            Fault::Halt(h) => h,
            Fault::Msg(m) => match self.emit(id, frame) {
                Ok(()) => Halt::Error(self.error_at(id, m)),
                Err(h) => h,
            },
        }
    }

    fn call(&mut self, args: &[Value]) -> Result<Value, Fault> {
        let params = self.ast.params();
        if params.len() != args.len() {
            return Err(Fault::Msg(format!(
                "{}() takes {} arguments but {} were given",
                self.ast.function_name(),
                params.len(),
                args.len()
            )));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(Fault::Msg("maximum recursion depth exceeded".into()));
        }
        self.depth += 1;
        let mut frame: Frame = params.iter().cloned().zip(args.iter().cloned()).collect();
        let flow = self.block(self.ast.body(), &mut frame);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Err(Fault::Halt(Halt::Error(
                self.error_at(NodeId::ROOT, format!("{}() ended without returning a value", self.ast.function_name())),
            ))),
        }
    }

    fn block(&mut self, block: NodeId, frame: &mut Frame) -> Result<Flow, Halt> {
        for &stmt in self.ast.children(block) {
            if let Flow::Return(v) = self.stmt(stmt, frame)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, id: NodeId, frame: &mut Frame) -> Result<Flow, Halt> {
        stacker::maybe_grow(64 * 1024, 1024 * 1024, || self.stmt_inner(id, frame))
    }

    fn stmt_inner(&mut self, id: NodeId, frame: &mut Frame) -> Result<Flow, Halt> {
        let ast = self.ast;
        let kids = ast.children(id);
        match &ast.node(id).kind {
            NodeKind::Assign | NodeKind::AugAssign(_) => {
                let result = self.eval(kids[1], frame).and_then(|v| {
                    let v = match &ast.node(id).kind {
                        NodeKind::AugAssign(op) => value::binary(*op, &self.eval(kids[0], frame)?, &v)?,
                        _ => v,
                    };
                    self.assign(kids[0], v, frame)
                });
                if let Err(f) = result {
                    return Err(self.fail(id, f, frame));
                }
                self.emit(id, frame)?;
                Ok(Flow::Next)
            }
            NodeKind::ExprStmt => {
                let call = kids[0];
                let result = match &ast.node(call).kind {
                    NodeKind::Call(n) if n == "append" && n != ast.function_name() => self.append(call, frame),
                    _ => self.eval(call, frame).map(|_| ()),
                };
                if let Err(f) = result {
                    return Err(self.fail(id, f, frame));
                }
                self.emit(id, frame)?;
                Ok(Flow::Next)
            }
            NodeKind::Pass => {
                self.emit(id, frame)?;
                Ok(Flow::Next)
            }
            NodeKind::Return => {
                let v = self.eval(kids[0], frame).map_err(|f| self.fail(id, f, frame))?;
                self.emit(id, frame)?;
                Ok(Flow::Return(v))
            }
            NodeKind::If => {
                let cond = self.eval(kids[0], frame).map_err(|f| self.fail(id, f, frame))?;
                self.emit(id, frame)?;
                if cond.truthy() {
                    self.block(kids[1], frame)
                } else if let Some(&orelse) = kids.get(2) {
                    self.block(orelse, frame)
                } else {
                    Ok(Flow::Next)
                }
            }
            NodeKind::While => loop {
                let cond = self.eval(kids[0], frame).map_err(|f| self.fail(id, f, frame))?;
                self.emit(id, frame)?;
                if !cond.truthy() {
                    return Ok(Flow::Next);
                }
                if let Flow::Return(v) = self.block(kids[1], frame)? {
                    return Ok(Flow::Return(v));
                }
            },
            NodeKind::ForRange { var } => {
                let bounds: Result<Vec<i64>, Fault> = kids[..kids.len() - 1]
                    .iter()
                    .map(|&e| {
                        let v = self.eval(e, frame)?;
                        v.as_int()
                            .ok_or_else(|| Fault::Msg(format!("'{}' object cannot be interpreted as an integer", v.type_name())))
                    })
                    .collect();
                let bounds = bounds.map_err(|f| self.fail(id, f, frame))?;
                let (mut i, stop) = match bounds[..] {
                    [stop] => (0, stop),
                    [start, stop] => (start, stop),
                    _ => unreachable!("range takes one or two bounds"),
                };
                let body = *kids.last().expect("loop body");
                loop {
                    if i >= stop {
                        self.emit(id, frame)?;
                        return Ok(Flow::Next);
                    }
                    frame.insert(var.clone(), Value::Int(i));
                    self.emit(id, frame)?;
                    if let Flow::Return(v) = self.block(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                    i += 1;
                }
            }
            other => unreachable!("not a statement: {other:?}"),
        }
    }

    fn assign(&mut self, target: NodeId, v: Value, frame: &mut Frame) -> Result<(), Fault> {
        let ast = self.ast;
        // Walk `name[i][j]...` down to the root name, collecting indices.
        let mut index_exprs = Vec::new();
        let mut cur = target;
        while let NodeKind::Index = ast.node(cur).kind {
            index_exprs.push(ast.children(cur)[1]);
            cur = ast.children(cur)[0];
        }
        let NodeKind::Name(name) = &ast.node(cur).kind else {
            return Err(Fault::Msg("cannot assign to expression".into()));
        };
        let mut indices = Vec::with_capacity(index_exprs.len());
        for &e in index_exprs.iter().rev() {
            indices.push(self.eval(e, frame)?);
        }
        if indices.is_empty() {
            frame.insert(name.clone(), v);
            return Ok(());
        }
        let mut slot = frame.get_mut(name).ok_or_else(|| format!("name '{name}' is not defined"))?;
        for i in &indices {
            let Value::List(xs) = slot else {
                return Err(Fault::Msg(format!("'{}' object does not support item assignment", slot.type_name())));
            };
            let pos = list_pos(xs.len(), i)?;
            slot = &mut xs[pos];
        }
        *slot = v;
        Ok(())
    }

    /// `append(xs, v)` extends the list stored at `xs` in place.
    fn append(&mut self, call: NodeId, frame: &mut Frame) -> Result<(), Fault> {
        let args = self.ast.children(call);
        if args.len() != 2 {
            return Err(Fault::Msg(format!("append() takes exactly 2 arguments ({} given)", args.len())));
        }
        if !matches!(self.ast.node(args[0]).kind, NodeKind::Name(_) | NodeKind::Index) {
            return Err(Fault::Msg("append() target must be a variable or list element".into()));
        }
        let mut list = self.eval(args[0], frame)?;
        let v = self.eval(args[1], frame)?;
        let Value::List(xs) = &mut list else {
            return Err(Fault::Msg(format!("'{}' object has no attribute 'append'", list.type_name())));
        };
        if xs.len() >= MAX_LIST_LEN {
            return Err(Fault::Msg("list too large".into()));
        }
        xs.push(v);
        self.assign(args[0], list, frame)
    }

    fn eval(&mut self, id: NodeId, frame: &Frame) -> Result<Value, Fault> {
        stacker::maybe_grow(64 * 1024, 1024 * 1024, || self.eval_inner(id, frame))
    }

    fn eval_inner(&mut self, id: NodeId, frame: &Frame) -> Result<Value, Fault> {
        let ast = self.ast;
        let kids = ast.children(id);
        Ok(match &ast.node(id).kind {
            NodeKind::Int(n) => Value::Int(*n),
            NodeKind::Bool(b) => Value::Bool(*b),
            NodeKind::Name(n) => frame.get(n).cloned().ok_or_else(|| format!("name '{n}' is not defined"))?,
            NodeKind::List => {
                let mut xs = Vec::with_capacity(kids.len());
                for &k in kids {
                    xs.push(self.eval(k, frame)?);
                }
                Value::List(xs)
            }
            NodeKind::BinOp(op) => {
                let a = self.eval(kids[0], frame)?;
                let b = self.eval(kids[1], frame)?;
                value::binary(*op, &a, &b)?
            }
            NodeKind::Compare(op) => {
                let a = self.eval(kids[0], frame)?;
                let b = self.eval(kids[1], frame)?;
                Value::Bool(value::compare(*op, &a, &b)?)
            }
            NodeKind::Unary(UnaryOp::Not) => Value::Bool(!self.eval(kids[0], frame)?.truthy()),
            NodeKind::Unary(UnaryOp::Neg) => {
                let v = self.eval(kids[0], frame)?;
                let n = v.as_int().ok_or_else(|| format!("bad operand type for unary -: '{}'", v.type_name()))?;
                Value::Int(n.checked_neg().ok_or_else(|| "integer overflow".to_string())?)
            }
            NodeKind::BoolOp(op) => {
                let a = self.eval(kids[0], frame)?;
                match (op, a.truthy()) {
                    (BoolOp::And, false) | (BoolOp::Or, true) => a,
                    _ => self.eval(kids[1], frame)?,
                }
            }
            NodeKind::Index => {
                let base = self.eval(kids[0], frame)?;
                let i = self.eval(kids[1], frame)?;
                match base {
                    Value::List(mut xs) => {
                        let pos = list_pos(xs.len(), &i)?;
                        xs.swap_remove(pos)
                    }
                    other => return Err(Fault::Msg(format!("'{}' object is not subscriptable", other.type_name()))),
                }
            }
            NodeKind::Call(name) => self.call_named(name, kids, frame)?,
            other => unreachable!("not an expression: {other:?}"),
        })
    }

    fn call_named(&mut self, name: &str, kids: &[NodeId], frame: &Frame) -> Result<Value, Fault> {
        if name == self.ast.function_name() {
            let mut args = Vec::with_capacity(kids.len());
            for &k in kids {
                args.push(self.eval(k, frame)?);
            }
            return self.call(&args);
        }
        if name == "append" {
            return Err(Fault::Msg("append() must be used as a statement".into()));
        }
        let mut args = Vec::with_capacity(kids.len());
        for &k in kids {
            args.push(self.eval(k, frame)?);
        }
        Ok(builtin(name, &args)?)
    }
}

fn list_pos(len: usize, i: &Value) -> Result<usize, String> {
    let Value::Int(i) = *i else {
        return Err(format!("list indices must be integers, not {}", i.type_name()));
    };
    let pos = if i < 0 { i + len as i64 } else { i };
    if pos < 0 || pos >= len as i64 {
        return Err("list index out of range".into());
    }
    Ok(pos as usize)
}

fn builtin(name: &str, args: &[Value]) -> Result<Value, String> {
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{name}() takes exactly {n} argument(s) ({} given)", args.len()))
        }
    };
    match name {
        "len" => {
            arity(1)?;
            match &args[0] {
                Value::List(xs) => Ok(Value::Int(xs.len() as i64)),
                v => Err(format!("object of type '{}' has no len()", v.type_name())),
            }
        }
        "abs" => {
            arity(1)?;
            let n = args[0].as_int().ok_or_else(|| format!("bad operand type for abs(): '{}'", args[0].type_name()))?;
            Ok(Value::Int(n.checked_abs().ok_or_else(|| "integer overflow".to_string())?))
        }
        "max" | "min" => {
            let items: &[Value] = match args {
                [] => return Err(format!("{name} expected at least 1 argument, got 0")),
                [Value::List(xs)] => xs,
                [v] => return Err(format!("'{}' object is not iterable", v.type_name())),
                many => many,
            };
            let mut best = items.first().ok_or_else(|| format!("{name}() arg is an empty sequence"))?;
            for x in &items[1..] {
                let ord = x.compare(best)?;
                if (name == "max" && ord.is_gt()) || (name == "min" && ord.is_lt()) {
                    best = x;
                }
            }
            Ok(best.clone())
        }
        "range" => Err("range() is only supported as a for-loop iterable".into()),
        _ => Err(format!("name '{name}' is not defined")),
    }
}
