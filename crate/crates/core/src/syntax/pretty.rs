//! Canonical pretty-printer. Output re-parses to a structurally identical AST.

use super::ast::{Ast, BoolOp, NodeId, NodeKind, UnaryOp};

pub fn pretty_print(ast: &Ast) -> String {
    let mut out = String::new();
    let (name, params) = match &ast.root().kind {
        NodeKind::FunctionDef { name, params } => (name.as_str(), params.join(", ")),
        _ => unreachable!("root is always a function definition"),
    };
    out.push_str(&format!("def {name}({params}):\n"));
    block(ast, ast.body(), 1, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn block(ast: &Ast, id: NodeId, level: usize, out: &mut String) {
    for &stmt in ast.children(id) {
        statement(ast, stmt, level, out);
    }
}

fn statement(ast: &Ast, id: NodeId, level: usize, out: &mut String) {
    let kids = ast.children(id);
    indent(level, out);
    match &ast.node(id).kind {
        NodeKind::Assign => out.push_str(&format!("{} = {}\n", expr(ast, kids[0]), expr(ast, kids[1]))),
        NodeKind::AugAssign(op) => {
            out.push_str(&format!("{} {}= {}\n", expr(ast, kids[0]), op.symbol(), expr(ast, kids[1])))
        }
        NodeKind::Return => out.push_str(&format!("return {}\n", expr(ast, kids[0]))),
        NodeKind::ExprStmt => out.push_str(&format!("{}\n", expr(ast, kids[0]))),
        NodeKind::Pass => out.push_str("pass\n"),
        NodeKind::While => {
            out.push_str(&format!("while {}:\n", expr(ast, kids[0])));
            block(ast, kids[1], level + 1, out);
        }
        NodeKind::ForRange { var } => {
            let args: Vec<_> = kids[..kids.len() - 1].iter().map(|&a| expr(ast, a)).collect();
            out.push_str(&format!("for {var} in range({}):\n", args.join(", ")));
            block(ast, kids[kids.len() - 1], level + 1, out);
        }
        NodeKind::If => if_chain(ast, id, level, "if", out),
        other => unreachable!("not a statement: {other:?}"),
    }
}

fn if_chain(ast: &Ast, id: NodeId, level: usize, keyword: &str, out: &mut String) {
    let kids = ast.children(id);
    out.push_str(&format!("{keyword} {}:\n", expr(ast, kids[0])));
    block(ast, kids[1], level + 1, out);
    if let Some(&orelse) = kids.get(2) {
        let inner = ast.children(orelse);
        if inner.len() == 1 && ast.node(inner[0]).kind == NodeKind::If {
            indent(level, out);
            if_chain(ast, inner[0], level, "elif", out);
        } else {
            indent(level, out);
            out.push_str("else:\n");
            block(ast, orelse, level + 1, out);
        }
    }
}

/// Binding strength; higher binds tighter.
fn precedence(kind: &NodeKind) -> u8 {
    match kind {
        NodeKind::BoolOp(BoolOp::Or) => 1,
        NodeKind::BoolOp(BoolOp::And) => 2,
        NodeKind::Unary(UnaryOp::Not) => 3,
        NodeKind::Compare(_) => 4,
        NodeKind::BinOp(op) if matches!(op.symbol(), "+" | "-") => 5,
        NodeKind::BinOp(_) => 6,
        NodeKind::Unary(UnaryOp::Neg) => 7,
        _ => 8,
    }
}

fn wrap(ast: &Ast, id: NodeId, min: u8) -> String {
    let s = expr(ast, id);
    if precedence(&ast.node(id).kind) < min {
        format!("({s})")
    } else {
        s
    }
}

fn expr(ast: &Ast, id: NodeId) -> String {
    let kids = ast.children(id);
    let kind = &ast.node(id).kind;
    let p = precedence(kind);
    match kind {
        NodeKind::Name(n) => n.clone(),
        NodeKind::Int(v) => v.to_string(),
        NodeKind::Bool(true) => "True".into(),
        NodeKind::Bool(false) => "False".into(),
        // Left-associative: the right operand needs strictly tighter binding.
        NodeKind::BinOp(op) => format!("{} {} {}", wrap(ast, kids[0], p), op.symbol(), wrap(ast, kids[1], p + 1)),
        NodeKind::BoolOp(op) => {
            let sym = if *op == BoolOp::And { "and" } else { "or" };
            format!("{} {sym} {}", wrap(ast, kids[0], p), wrap(ast, kids[1], p + 1))
        }
        // Comparisons do not chain, so both sides must bind tighter.
        NodeKind::Compare(op) => {
            format!("{} {} {}", wrap(ast, kids[0], p + 1), op.symbol(), wrap(ast, kids[1], p + 1))
        }
        NodeKind::Unary(UnaryOp::Neg) => format!("-{}", wrap(ast, kids[0], p)),
        NodeKind::Unary(UnaryOp::Not) => format!("not {}", wrap(ast, kids[0], p)),
        NodeKind::Call(name) => {
            let args: Vec<_> = kids.iter().map(|&a| expr(ast, a)).collect();
            format!("{name}({})", args.join(", "))
        }
        NodeKind::Index => format!("{}[{}]", wrap(ast, kids[0], 8), expr(ast, kids[1])),
        NodeKind::List => {
            let elems: Vec<_> = kids.iter().map(|&a| expr(ast, a)).collect();
            format!("[{}]", elems.join(", "))
        }
        other => unreachable!("not an expression: {other:?}"),
    }
}
