//! Arena-allocated MiniLang syntax tree.
//!
//! Nodes are stored in pre-order, so the root is always [`NodeId::ROOT`] and
//! a node's descendants occupy a contiguous id range after it.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::TokenRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    FloorDiv,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "//" => BinOp::FloorDiv,
            "%" => BinOp::Mod,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoolOp {
    And,
    Or,
}

/// Node kinds with their payloads.
///
/// Child layout per kind:
/// - `FunctionDef`: `[Block]`
/// - `Block`: statements
/// - `Assign`, `AugAssign`: `[target, value]`
/// - `If`: `[cond, Block]` or `[cond, Block, Block]`
/// - `While`: `[cond, Block]`
/// - `ForRange`: `[stop, Block]` or `[start, stop, Block]`
/// - `Return`, `ExprStmt`: `[expr]`
/// - `BinOp`, `Compare`, `BoolOp`: `[lhs, rhs]`; `Unary`: `[operand]`
/// - `Call`: arguments; `Index`: `[base, index]`; `List`: elements
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    FunctionDef { name: String, params: Vec<String> },
    Block,
    Assign,
    AugAssign(BinOp),
    If,
    While,
    ForRange { var: String },
    Return,
    ExprStmt,
    Pass,
    Name(String),
    Int(i64),
    Bool(bool),
    BinOp(BinOp),
    Unary(UnaryOp),
    BoolOp(BoolOp),
    Compare(CmpOp),
    Call(String),
    Index,
    List,
}

impl NodeKind {
    pub fn is_statement(&self) -> bool {
        matches!(
            self,
            NodeKind::Assign
                | NodeKind::AugAssign(_)
                | NodeKind::If
                | NodeKind::While
                | NodeKind::ForRange { .. }
                | NodeKind::Return
                | NodeKind::ExprStmt
                | NodeKind::Pass
        )
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, NodeKind::While | NodeKind::ForRange { .. })
    }

    /// Coarse class name used by constraints (`for-range`, `while`, ...).
    pub fn class(&self) -> &'static str {
        match self {
            NodeKind::FunctionDef { .. } => "function-def",
            NodeKind::Block => "block",
            NodeKind::Assign => "assign",
            NodeKind::AugAssign(_) => "aug-assign",
            NodeKind::If => "if",
            NodeKind::While => "while",
            NodeKind::ForRange { .. } => "for-range",
            NodeKind::Return => "return",
            NodeKind::ExprStmt => "expr-stmt",
            NodeKind::Pass => "pass",
            NodeKind::Name(_) => "name",
            NodeKind::Int(_) => "int",
            NodeKind::Bool(_) => "bool",
            NodeKind::BinOp(_) => "binop",
            NodeKind::Unary(_) => "unary",
            NodeKind::BoolOp(_) => "boolop",
            NodeKind::Compare(_) => "compare",
            NodeKind::Call(_) => "call",
            NodeKind::Index => "index",
            NodeKind::List => "list",
        }
    }

    /// Label with names abstracted to `VAR` and literals to `LIT`.
    /// `fn_name` distinguishes self-calls from builtin calls.
    pub fn normalized_label(&self, fn_name: &str) -> String {
        match self {
            NodeKind::FunctionDef { params, .. } => format!("def/{}", params.len()),
            NodeKind::Name(_) => "VAR".into(),
            NodeKind::Int(_) | NodeKind::Bool(_) => "LIT".into(),
            NodeKind::ForRange { .. } => "for-range".into(),
            NodeKind::AugAssign(op) => format!("aug{}=", op.symbol()),
            NodeKind::BinOp(op) => format!("binop{}", op.symbol()),
            NodeKind::Compare(op) => format!("cmp{}", op.symbol()),
            NodeKind::Unary(UnaryOp::Neg) => "neg".into(),
            NodeKind::Unary(UnaryOp::Not) => "not".into(),
            NodeKind::BoolOp(BoolOp::And) => "and".into(),
            NodeKind::BoolOp(BoolOp::Or) => "or".into(),
            NodeKind::Call(name) if name == fn_name => "call:<self>".into(),
            NodeKind::Call(name) => format!("call:{name}"),
            other => other.class().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Tokens covered by this node and its descendants.
    pub tokens: TokenRange,
    /// For compound statements, the header through the colon; otherwise
    /// equal to `tokens`.
    pub head: TokenRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ast {
    nodes: Vec<Node>,
}

impl Ast {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        debug_assert!(!nodes.is_empty());
        Ast { nodes }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn function_name(&self) -> &str {
        match &self.root().kind {
            NodeKind::FunctionDef { name, .. } => name,
            _ => "",
        }
    }

    pub fn params(&self) -> &[String] {
        match &self.root().kind {
            NodeKind::FunctionDef { params, .. } => params,
            _ => &[],
        }
    }

    /// The function body block.
    pub fn body(&self) -> NodeId {
        self.root().children[0]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    /// Number of loops enclosing `id`, counting `id` itself if it is a loop.
    pub fn loop_depth_at(&self, id: NodeId) -> usize {
        let mut depth = 0;
        let mut cur = Some(id);
        while let Some(c) = cur {
            if self.node(c).kind.is_loop() {
                depth += 1;
            }
            cur = self.node(c).parent;
        }
        depth
    }

    /// Maximum loop nesting depth in the program.
    pub fn max_loop_depth(&self) -> usize {
        self.ids().map(|id| self.loop_depth_at(id)).max().unwrap_or(0)
    }

    /// Calls from the function to itself.
    pub fn self_calls(&self) -> Vec<NodeId> {
        let name = self.function_name();
        self.nodes()
            .filter(|(_, n)| matches!(&n.kind, NodeKind::Call(c) if c == name))
            .map(|(id, _)| id)
            .collect()
    }

    /// Statement nodes in pre-order.
    pub fn statements(&self) -> Vec<NodeId> {
        self.nodes().filter(|(_, n)| n.kind.is_statement()).map(|(id, _)| id).collect()
    }

    /// Nodes without children.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes().filter(|(_, n)| n.children.is_empty()).map(|(id, _)| id).collect()
    }

    /// For every token index `1..=T`, the deepest node whose range covers it.
    pub fn token_owners(&self, token_count: usize) -> Vec<Option<NodeId>> {
        let mut owners = vec![None; token_count];
        // Pre-order: later (deeper) nodes overwrite their ancestors.
        for (id, node) in self.nodes() {
            for t in node.tokens.indices() {
                if t < token_count {
                    owners[t] = Some(id);
                }
            }
        }
        owners
    }

    /// A canonical s-expression of kinds and payloads, ignoring token ranges.
    /// Two ASTs are structurally identical iff their shapes are equal.
    pub fn shape(&self) -> String {
        let mut out = String::new();
        self.write_shape(NodeId::ROOT, &mut out);
        out
    }

    fn write_shape(&self, id: NodeId, out: &mut String) {
        let node = self.node(id);
        let _ = write!(out, "({:?}", node.kind);
        for &c in &node.children {
            out.push(' ');
            self.write_shape(c, out);
        }
        out.push(')');
    }

    pub fn structurally_eq(&self, other: &Ast) -> bool {
        self.nodes.len() == other.nodes.len() && self.shape() == other.shape()
    }
}
