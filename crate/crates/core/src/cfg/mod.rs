//! Normalized control-flow graphs and the structural comparability gate.
//!
//! Each CFG block covers a run of statements. Straight-line runs are merged;
//! `if`/`while`/`for` headers and `return` statements get blocks of their
//! own. Block labels are normalized: variables are renamed in order of first
//! occurrence and literals collapse to `LIT`, so two programs that differ
//! only in naming or constants produce identical signatures.

mod similarity;
mod ted;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::syntax::{Ast, BoolOp, NodeId, NodeKind, UnaryOp};

pub use similarity::{comparable, similarity, SimilarityScore, Thresholds, TED_NODE_LIMIT};
pub use ted::{tree_edit_distance, LabeledTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Entry,
    Exit,
    Straight,
    BranchHead,
    LoopHead,
    LoopBody,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Fallthrough,
    TrueBranch,
    FalseBranch,
    LoopBack,
    LoopExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub kind: BlockKind,
    pub stmts: Vec<NodeId>,
    /// Normalized text of the block's statements.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

/// Typed edge used for structural comparison.
pub type EdgeType = (BlockKind, EdgeKind, BlockKind);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    blocks: Vec<Block>,
    edges: Vec<Edge>,
    stmt_block: BTreeMap<NodeId, BlockId>,
}

impl Cfg {
    pub const ENTRY: BlockId = BlockId(0);
    pub const EXIT: BlockId = BlockId(1);

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Block containing a statement; `None` for unreachable statements.
    pub fn block_of(&self, stmt: NodeId) -> Option<BlockId> {
        self.stmt_block.get(&stmt).copied()
    }

    pub fn edge_multiset(&self) -> BTreeMap<EdgeType, usize> {
        let mut out = BTreeMap::new();
        for e in &self.edges {
            let key = (self.block(e.from).kind, e.kind, self.block(e.to).kind);
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    /// Normalized structure, independent of node ids. Equal signatures mean
    /// the CFGs are identical after normalization.
    pub fn signature(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            s.push_str(&format!("{}:{:?}[{}]\n", b.id, b.kind, b.label));
        }
        for e in &self.edges {
            s.push_str(&format!("{}-{:?}->{}\n", e.from, e.kind, e.to));
        }
        s
    }

    /// Blocks reachable from the entry block.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.blocks.len()];
        let mut stack = vec![Self::ENTRY];
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b.0], true) {
                continue;
            }
            stack.extend(self.successors(b).map(|e| e.to));
        }
        seen
    }
}

/// Build the normalized CFG of a parsed function.
pub fn build_cfg(ast: &Ast) -> Cfg {
    let names = alpha_names(ast);
    let mut b = Builder { ast, blocks: Vec::new(), edges: Vec::new(), stmt_block: BTreeMap::new() };
    let entry = b.new_block(BlockKind::Entry);
    let exit = b.new_block(BlockKind::Exit);
    debug_assert_eq!((entry, exit), (Cfg::ENTRY, Cfg::EXIT));
    let out = b.seq(ast.children(ast.body()), vec![(entry, EdgeKind::Fallthrough)], false);
    b.connect(&out, exit, |k| k);
    for block in &mut b.blocks {
        block.label = block.stmts.iter().map(|&s| stmt_label(ast, s, &names)).collect::<Vec<_>>().join("; ");
    }
    Cfg { blocks: b.blocks, edges: b.edges, stmt_block: b.stmt_block }
}

type Pending = Vec<(BlockId, EdgeKind)>;

struct Builder<'a> {
    ast: &'a Ast,
    blocks: Vec<Block>,
    edges: Vec<Edge>,
    stmt_block: BTreeMap<NodeId, BlockId>,
}

impl Builder<'_> {
    fn new_block(&mut self, kind: BlockKind) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(Block { id, kind, stmts: Vec::new(), label: String::new() });
        id
    }

    fn add_stmt(&mut self, block: BlockId, stmt: NodeId) {
        self.blocks[block.0].stmts.push(stmt);
        self.stmt_block.insert(stmt, block);
    }

    fn connect(&mut self, from: &Pending, to: BlockId, relabel: impl Fn(EdgeKind) -> EdgeKind) {
        for &(src, kind) in from {
            self.edges.push(Edge { from: src, to, kind: relabel(kind) });
        }
    }

    fn seq(&mut self, stmts: &[NodeId], mut incoming: Pending, in_loop: bool) -> Pending {
        let mut open: Option<BlockId> = None;
        for &stmt in stmts {
            if incoming.is_empty() {
                // Everything after an unconditional return is dead.
                break;
            }
            let kind = self.ast.node(stmt).kind.clone();
            match kind {
                NodeKind::Assign | NodeKind::AugAssign(_) | NodeKind::ExprStmt | NodeKind::Pass => {
                    let continuing = matches!(open, Some(o) if incoming == [(o, EdgeKind::Fallthrough)]);
                    let block = match open {
                        Some(o) if continuing => o,
                        _ => {
                            let nb = self.new_block(if in_loop { BlockKind::LoopBody } else { BlockKind::Straight });
                            self.connect(&incoming, nb, |k| k);
                            open = Some(nb);
                            nb
                        }
                    };
                    self.add_stmt(block, stmt);
                    incoming = vec![(block, EdgeKind::Fallthrough)];
                }
                NodeKind::Return => {
                    let nb = self.new_block(BlockKind::Return);
                    self.connect(&incoming, nb, |k| k);
                    self.add_stmt(nb, stmt);
                    self.edges.push(Edge { from: nb, to: Cfg::EXIT, kind: EdgeKind::Fallthrough });
                    open = None;
                    incoming = Vec::new();
                }
                NodeKind::If => {
                    let head = self.new_block(BlockKind::BranchHead);
                    self.connect(&incoming, head, |k| k);
                    self.add_stmt(head, stmt);
                    let kids = self.ast.children(stmt).to_vec();
                    let mut out = self.seq(self.ast.children(kids[1]), vec![(head, EdgeKind::TrueBranch)], in_loop);
                    match kids.get(2) {
                        Some(&orelse) => {
                            out.extend(self.seq(self.ast.children(orelse), vec![(head, EdgeKind::FalseBranch)], in_loop))
                        }
                        None => out.push((head, EdgeKind::FalseBranch)),
                    }
                    open = None;
                    incoming = out;
                }
                NodeKind::While | NodeKind::ForRange { .. } => {
                    let head = self.new_block(BlockKind::LoopHead);
                    self.connect(&incoming, head, |k| k);
                    self.add_stmt(head, stmt);
                    let body = *self.ast.children(stmt).last().expect("loop has a body");
                    let out = self.seq(self.ast.children(body), vec![(head, EdgeKind::TrueBranch)], true);
                    self.connect(&out, head, |k| if k == EdgeKind::Fallthrough { EdgeKind::LoopBack } else { k });
                    open = None;
                    incoming = vec![(head, EdgeKind::LoopExit)];
                }
                other => unreachable!("not a statement: {other:?}"),
            }
        }
        incoming
    }
}

/// Map each variable to `v0, v1, ...` in order of first occurrence
/// (parameters first, then pre-order).
fn alpha_names(ast: &Ast) -> HashMap<String, String> {
    let mut names = HashMap::new();
    let add = |n: &str, names: &mut HashMap<String, String>| {
        let next = names.len();
        names.entry(n.to_string()).or_insert_with(|| format!("v{next}"));
    };
    for p in ast.params() {
        add(p, &mut names);
    }
    for (_, node) in ast.nodes() {
        match &node.kind {
            NodeKind::Name(n) => add(n, &mut names),
            NodeKind::ForRange { var } => add(var, &mut names),
            _ => {}
        }
    }
    names
}

fn stmt_label(ast: &Ast, id: NodeId, names: &HashMap<String, String>) -> String {
    let kids = ast.children(id);
    let e = |i: usize| norm_expr(ast, kids[i], names);
    match &ast.node(id).kind {
        NodeKind::Assign => format!("{} = {}", e(0), e(1)),
        NodeKind::AugAssign(op) => format!("{} {}= {}", e(0), op.symbol(), e(1)),
        NodeKind::Return => format!("return {}", e(0)),
        NodeKind::ExprStmt => e(0),
        NodeKind::Pass => "pass".into(),
        NodeKind::If => format!("if {}", e(0)),
        NodeKind::While => format!("while {}", e(0)),
        NodeKind::ForRange { var } => {
            let args: Vec<_> = (0..kids.len() - 1).map(e).collect();
            format!("for {} in range({})", names.get(var).map(String::as_str).unwrap_or("?"), args.join(", "))
        }
        other => other.class().into(),
    }
}

fn norm_expr(ast: &Ast, id: NodeId, names: &HashMap<String, String>) -> String {
    let kids = ast.children(id);
    let e = |i: usize| norm_expr(ast, kids[i], names);
    match &ast.node(id).kind {
        NodeKind::Name(n) => names.get(n).cloned().unwrap_or_else(|| "?".into()),
        NodeKind::Int(_) | NodeKind::Bool(_) => "LIT".into(),
        NodeKind::BinOp(op) => format!("({} {} {})", e(0), op.symbol(), e(1)),
        NodeKind::Compare(op) => format!("({} {} {})", e(0), op.symbol(), e(1)),
        NodeKind::BoolOp(BoolOp::And) => format!("({} and {})", e(0), e(1)),
        NodeKind::BoolOp(BoolOp::Or) => format!("({} or {})", e(0), e(1)),
        NodeKind::Unary(UnaryOp::Neg) => format!("(-{})", e(0)),
        NodeKind::Unary(UnaryOp::Not) => format!("(not {})", e(0)),
        NodeKind::Call(name) => {
            let callee = if name == ast.function_name() { "<self>" } else { name.as_str() };
            let args: Vec<_> = (0..kids.len()).map(e).collect();
            format!("{callee}({})", args.join(", "))
        }
        NodeKind::Index => format!("{}[{}]", e(0), e(1)),
        NodeKind::List => {
            let elems: Vec<_> = (0..kids.len()).map(e).collect();
            format!("[{}]", elems.join(", "))
        }
        other => other.class().into(),
    }
}
