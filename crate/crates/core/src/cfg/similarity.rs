use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ted::{tree_edit_distance, LabeledTree};
use crate::program::Program;

/// Exact tree edit distance is used up to this many AST nodes per side;
/// larger trees fall back to label-multiset Jaccard.
pub const TED_NODE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub ast_score: f64,
    pub cfg_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub ast: f64,
    pub cfg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { ast: 0.6, cfg: 0.6 }
    }
}

fn multiset_jaccard<K: Ord>(a: &BTreeMap<K, usize>, b: &BTreeMap<K, usize>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (k, &ca) in a {
        let cb = b.get(k).copied().unwrap_or(0);
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    for (k, &cb) in b {
        if !a.contains_key(k) {
            union += cb;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn ast_score(a: &LabeledTree, b: &LabeledTree) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n > TED_NODE_LIMIT || m > TED_NODE_LIMIT {
        let count = |t: &LabeledTree| {
            let mut out = BTreeMap::new();
            for l in &t.labels {
                *out.entry(l.clone()).or_insert(0usize) += 1;
            }
            out
        };
        return multiset_jaccard(&count(a), &count(b));
    }
    let d = tree_edit_distance(a, b);
    (1.0 - d as f64 / n.max(m) as f64).clamp(0.0, 1.0)
}

/// Structural similarity of two parsed programs.
///
/// `ast_score` is one minus the unit-cost tree edit distance over
/// normalized node labels, divided by the larger tree size. `cfg_score` is
/// the Jaccard similarity of typed edge multisets.
pub fn similarity(a: &Program, b: &Program) -> SimilarityScore {
    let ast = ast_score(&LabeledTree::from_ast(a.ast()), &LabeledTree::from_ast(b.ast()));
    let cfg = multiset_jaccard(&a.cfg().edge_multiset(), &b.cfg().edge_multiset());
    SimilarityScore { ast_score: ast, cfg_score: cfg }
}

/// The comparability gate: both scores must reach their thresholds.
pub fn comparable(score: SimilarityScore, thresholds: Thresholds) -> bool {
    score.ast_score >= thresholds.ast && score.cfg_score >= thresholds.cfg
}
