//! Zhang–Shasha ordered tree edit distance with unit costs.

use crate::syntax::{Ast, NodeId};

/// Ordered tree with string labels; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    pub labels: Vec<String>,
    pub children: Vec<Vec<usize>>,
}

impl LabeledTree {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Tree of normalized node labels (names as `VAR`, literals as `LIT`).
    pub fn from_ast(ast: &Ast) -> Self {
        let fn_name = ast.function_name();
        let labels = ast.ids().map(|id| ast.node(id).kind.normalized_label(fn_name)).collect();
        let children = ast.ids().map(|id| ast.children(id).iter().map(|c: &NodeId| c.0).collect()).collect();
        LabeledTree { labels, children }
    }
}

struct Postorder<'a> {
    labels: Vec<&'a str>,
    /// Leftmost leaf descendant, in postorder numbering.
    lld: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Postorder<'a> {
    fn new(tree: &'a LabeledTree) -> Self {
        let n = tree.len();
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
        while let Some(top) = stack.last_mut() {
            let (node, next) = *top;
            if next < tree.children[node].len() {
                top.1 += 1;
                stack.push((tree.children[node][next], 0));
            } else {
                stack.pop();
                order.push(node);
            }
        }
        let mut post_of = vec![0; n];
        for (p, &node) in order.iter().enumerate() {
            post_of[node] = p;
        }
        let mut lld = vec![0; n];
        for (p, &node) in order.iter().enumerate() {
            lld[p] = match tree.children[node].first() {
                Some(&c) => lld[post_of[c]],
                None => p,
            };
        }
        let labels = order.iter().map(|&node| tree.labels[node].as_str()).collect();
        // A keyroot is the highest node sharing its leftmost leaf.
        let mut seen = vec![false; n];
        let mut keyroots = Vec::new();
        for p in (0..n).rev() {
            if !std::mem::replace(&mut seen[lld[p]], true) {
                keyroots.push(p);
            }
        }
        keyroots.reverse();
        Postorder { labels, lld, keyroots }
    }
}

/// Edit distance with unit insert, delete and relabel costs.
pub fn tree_edit_distance(a: &LabeledTree, b: &LabeledTree) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    let ta = Postorder::new(a);
    let tb = Postorder::new(b);
    let (n, m) = (a.len(), b.len());
    let mut td = vec![vec![0usize; m]; n];
    let mut fd = vec![vec![0usize; m + 1]; n + 1];
    for &i in &ta.keyroots {
        for &j in &tb.keyroots {
            let (li, lj) = (ta.lld[i], tb.lld[j]);
            let rows = i - li + 2;
            let cols = j - lj + 2;
            fd[0][0] = 0;
            for x in 1..rows {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..cols {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..rows {
                let ii = li + x - 1;
                for y in 1..cols {
                    let jj = lj + y - 1;
                    if ta.lld[ii] == li && tb.lld[jj] == lj {
                        let relabel = usize::from(ta.labels[ii] != tb.labels[jj]);
                        fd[x][y] = (fd[x - 1][y] + 1).min(fd[x][y - 1] + 1).min(fd[x - 1][y - 1] + relabel);
                        td[ii][jj] = fd[x][y];
                    } else {
                        let px = ta.lld[ii] - li;
                        let py = tb.lld[jj] - lj;
                        fd[x][y] = (fd[x - 1][y] + 1).min(fd[x][y - 1] + 1).min(fd[px][py] + td[ii][jj]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(spec: &[(&str, &[usize])]) -> LabeledTree {
        LabeledTree {
            labels: spec.iter().map(|(l, _)| l.to_string()).collect(),
            children: spec.iter().map(|(_, c)| c.to_vec()).collect(),
        }
    }

    #[test]
    fn classic_example() {
        // Zhang & Shasha's running example: distance 2.
        // f(d(a, c(b)), e)  vs  f(c(d(a, b)), e)
        let t1 = tree(&[("f", &[1, 5]), ("d", &[2, 3]), ("a", &[]), ("c", &[4]), ("b", &[]), ("e", &[])]);
        let t2 = tree(&[("f", &[1, 5]), ("c", &[2]), ("d", &[3, 4]), ("a", &[]), ("b", &[]), ("e", &[])]);
        assert_eq!(tree_edit_distance(&t1, &t2), 2);
        assert_eq!(tree_edit_distance(&t2, &t1), 2);
    }

    #[test]
    fn identity_relabel_insert() {
        let t1 = tree(&[("a", &[1, 2]), ("b", &[]), ("c", &[])]);
        assert_eq!(tree_edit_distance(&t1, &t1), 0);
        let t2 = tree(&[("a", &[1, 2]), ("b", &[]), ("x", &[])]);
        assert_eq!(tree_edit_distance(&t1, &t2), 1);
        let t3 = tree(&[("a", &[1, 2, 3]), ("b", &[]), ("c", &[]), ("d", &[])]);
        assert_eq!(tree_edit_distance(&t1, &t3), 1);
        let single = tree(&[("a", &[])]);
        assert_eq!(tree_edit_distance(&single, &t3), 3);
    }
}
