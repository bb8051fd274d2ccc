//! Static alignment of a candidate with the reference.
//!
//! Statement lists are aligned by a weighted longest common subsequence,
//! recursing into the bodies of matched compound statements. A statement is
//! identified by the token span its trace events carry, so the alignment is
//! usable both on freshly executed traces and on traces read from disk.

use std::collections::{BTreeMap, BTreeSet};

use crate::cfg::{BlockId, Cfg};
use crate::exec::Trace;
use crate::syntax::{Ast, NodeId, NodeKind, TokenRange};
use crate::Program;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    /// Candidate variable → reference variable. Injective.
    pub variable_map: BTreeMap<String, String>,
    /// Candidate statement site → reference statement site. Injective.
    pub site_map: BTreeMap<TokenRange, TokenRange>,
    /// Candidate CFG block → reference CFG block, where consistent.
    pub block_map: BTreeMap<BlockId, BlockId>,
    /// Candidate sites whose evaluation picks the next statement
    /// (branch and loop headers).
    pub decision_sites: BTreeSet<TokenRange>,
}

impl Alignment {
    pub fn identity(program: &Program) -> Alignment {
        align_programs(program, program)
    }

    pub(crate) fn reference_sites(&self) -> BTreeSet<TokenRange> {
        self.site_map.values().copied().collect()
    }
}

/// Label of a whole subtree with names and literals abstracted.
fn subtree_label(ast: &Ast, id: NodeId) -> String {
    let mut out = ast.node(id).kind.normalized_label(ast.function_name());
    let kids = ast.children(id);
    if !kids.is_empty() {
        out.push('(');
        for (i, &c) in kids.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&subtree_label(ast, c));
        }
        out.push(')');
    }
    out
}

fn match_score(ca: &Ast, c: NodeId, ra: &Ast, r: NodeId) -> u32 {
    let (ck, rk) = (&ca.node(c).kind, &ra.node(r).kind);
    if ck.class() != rk.class() {
        return 0;
    }
    if subtree_label(ca, c) == subtree_label(ra, r) {
        3
    } else {
        1
    }
}

/// Maximum-weight order-preserving matching of two statement lists.
fn lcs(ca: &Ast, cs: &[NodeId], ra: &Ast, rs: &[NodeId]) -> Vec<(NodeId, NodeId)> {
    let (n, m) = (cs.len(), rs.len());
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let s = match_score(ca, cs[i], ra, rs[j]);
            let take = if s > 0 { s + dp[i + 1][j + 1] } else { 0 };
            dp[i][j] = take.max(dp[i + 1][j]).max(dp[i][j + 1]);
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < n && j < m {
        let s = match_score(ca, cs[i], ra, rs[j]);
        if s > 0 && dp[i][j] == s + dp[i + 1][j + 1] {
            out.push((cs[i], rs[j]));
            i += 1;
            j += 1;
        } else if dp[i][j] == dp[i + 1][j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn match_blocks(ca: &Ast, cb: NodeId, ra: &Ast, rb: NodeId, out: &mut Vec<(NodeId, NodeId)>) {
    for (c, r) in lcs(ca, ca.children(cb), ra, ra.children(rb)) {
        out.push((c, r));
        let (ck, rk) = (ca.children(c), ra.children(r));
        // Compound statements: pair up their blocks in order.
        let cblocks = ck.iter().filter(|&&k| ca.node(k).kind == NodeKind::Block);
        let rblocks = rk.iter().filter(|&&k| ra.node(k).kind == NodeKind::Block);
        for (&x, &y) in cblocks.zip(rblocks) {
            match_blocks(ca, x, ra, y, out);
        }
    }
}

/// Root variable written by an assignment target.
fn assigned_name(ast: &Ast, stmt: NodeId) -> Option<&str> {
    match &ast.node(stmt).kind {
        NodeKind::ForRange { var } => Some(var),
        NodeKind::Assign | NodeKind::AugAssign(_) => {
            let mut cur = ast.children(stmt)[0];
            while ast.node(cur).kind == NodeKind::Index {
                cur = ast.children(cur)[0];
            }
            match &ast.node(cur).kind {
                NodeKind::Name(n) => Some(n),
                _ => None,
            }
        }
        _ => None,
    }
}

fn insert_injective(map: &mut BTreeMap<String, String>, used: &mut BTreeSet<String>, c: &str, r: &str) {
    if !map.contains_key(c) && !used.contains(r) {
        map.insert(c.to_string(), r.to_string());
        used.insert(r.to_string());
    }
}

fn decision_sites(ast: &Ast) -> BTreeSet<TokenRange> {
    ast.nodes()
        .filter(|(_, n)| matches!(n.kind, NodeKind::If | NodeKind::While | NodeKind::ForRange { .. }))
        .map(|(_, n)| n.head)
        .collect()
}

fn block_map(cc: &Cfg, rc: &Cfg, pairs: &[(NodeId, NodeId)]) -> BTreeMap<BlockId, BlockId> {
    let mut map = BTreeMap::from([(Cfg::ENTRY, Cfg::ENTRY), (Cfg::EXIT, Cfg::EXIT)]);
    let mut conflicts = BTreeSet::new();
    for &(c, r) in pairs {
        let (Some(cb), Some(rb)) = (cc.block_of(c), rc.block_of(r)) else { continue };
        match map.get(&cb) {
            Some(&prev) if prev != rb => {
                conflicts.insert(cb);
            }
            _ => {
                map.insert(cb, rb);
            }
        }
    }
    for cb in conflicts {
        map.remove(&cb);
    }
    // Keep only injective pairs.
    let mut seen: BTreeMap<BlockId, usize> = BTreeMap::new();
    for rb in map.values() {
        *seen.entry(*rb).or_default() += 1;
    }
    map.retain(|_, rb| seen[rb] == 1);
    map
}

/// Align two parsed programs from their syntax alone.
///
/// Parameters pair positionally; other variables pair through matched
/// assignment sites in candidate pre-order, first come first served.
pub fn align_programs(candidate: &Program, reference: &Program) -> Alignment {
    let (ca, ra) = (candidate.ast(), reference.ast());
    let mut pairs = Vec::new();
    match_blocks(ca, ca.body(), ra, ra.body(), &mut pairs);
    pairs.sort();

    let mut variable_map = BTreeMap::new();
    let mut used = BTreeSet::new();
    for (c, r) in ca.params().iter().zip(ra.params()) {
        insert_injective(&mut variable_map, &mut used, c, r);
    }
    for &(c, r) in &pairs {
        if let (Some(cn), Some(rn)) = (assigned_name(ca, c), assigned_name(ra, r)) {
            insert_injective(&mut variable_map, &mut used, cn, rn);
        }
    }

    let site_map = pairs.iter().map(|&(c, r)| (ca.node(c).head, ra.node(r).head)).collect();
    Alignment {
        variable_map,
        site_map,
        block_map: block_map(candidate.cfg(), reference.cfg(), &pairs),
        decision_sites: decision_sites(ca),
    }
}

/// Alignment when only traces are available: sites pair by source line
/// (lines hosting exactly one site on each side), variables by name, and
/// decision sites are those observed with more than one successor in either
/// trace.
pub fn align_traces(candidate: &Trace, reference: &Trace) -> Alignment {
    fn sites_by_line(t: &Trace) -> BTreeMap<u32, BTreeSet<TokenRange>> {
        let mut out: BTreeMap<u32, BTreeSet<TokenRange>> = BTreeMap::new();
        for e in &t.events {
            out.entry(e.line).or_default().insert(e.span);
        }
        out
    }
    let (cl, rl) = (sites_by_line(candidate), sites_by_line(reference));
    let mut site_map = BTreeMap::new();
    for (line, cs) in &cl {
        if let Some(rs) = rl.get(line) {
            if cs.len() == 1 && rs.len() == 1 {
                site_map.insert(*cs.first().unwrap(), *rs.first().unwrap());
            }
        }
    }
    let names = |t: &Trace| t.events.iter().flat_map(|e| e.state.keys().cloned()).collect::<BTreeSet<_>>();
    let rnames = names(reference);
    let variable_map = names(candidate).into_iter().filter(|n| rnames.contains(n)).map(|n| (n.clone(), n)).collect();

    let mut decision_sites = branching_sites(candidate);
    let inverse: BTreeMap<TokenRange, TokenRange> = site_map.iter().map(|(c, r)| (*r, *c)).collect();
    decision_sites.extend(branching_sites(reference).iter().filter_map(|r| inverse.get(r)));
    Alignment { variable_map, site_map, block_map: BTreeMap::new(), decision_sites }
}

/// Sites observed with more than one distinct successor.
fn branching_sites(trace: &Trace) -> BTreeSet<TokenRange> {
    let mut successors: BTreeMap<TokenRange, BTreeSet<TokenRange>> = BTreeMap::new();
    for w in trace.events.windows(2) {
        successors.entry(w[0].span).or_default().insert(w[1].span);
    }
    successors.into_iter().filter(|(_, s)| s.len() > 1).map(|(k, _)| k).collect()
}
