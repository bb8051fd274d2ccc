mod common;

use std::collections::HashMap;

use egca::cfg::{comparable, similarity, tree_edit_distance, LabeledTree, Thresholds};
use egca::syntax::{tokenize, TokenKind};
use egca::Program;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Rename every variable, including parameters, consistently.
fn rename(source: &str) -> String {
    let names: HashMap<&str, &str> =
        [("a", "alpha"), ("b", "beta"), ("c", "gamma"), ("n", "count"), ("xs", "items"), ("out", "acc"), ("i", "p"), ("j", "q"), ("k", "r")]
            .into_iter()
            .collect();
    let mut out = String::new();
    let mut at = 0;
    for t in tokenize(source).unwrap() {
        if t.kind == TokenKind::Identifier {
            if let Some(new) = names.get(t.text.as_str()) {
                out.push_str(&source[at..t.span.start]);
                out.push_str(new);
                at = t.span.end;
            }
        }
    }
    out.push_str(&source[at..]);
    out
}

fn random_tree(rng: &mut ChaCha8Rng, size: usize) -> LabeledTree {
    let mut labels = vec![String::new(); size];
    let mut children = vec![Vec::new(); size];
    for (i, l) in labels.iter_mut().enumerate() {
        *l = ["x", "y", "z"][rng.gen_range(0..3)].to_string();
        if i > 0 {
            let parent = rng.gen_range(0..i);
            children[parent].push(i);
        }
    }
    LabeledTree { labels, children }
}

/// Forest edit distance by direct recursion on the rightmost roots.
fn forest_distance(t1: &LabeledTree, f1: &[usize], t2: &LabeledTree, f2: &[usize], memo: &mut HashMap<(Vec<usize>, Vec<usize>), usize>) -> usize {
    fn size(t: &LabeledTree, f: &[usize]) -> usize {
        f.iter().map(|&v| 1 + size(t, &t.children[v])).sum()
    }
    if f1.is_empty() {
        return size(t2, f2);
    }
    if f2.is_empty() {
        return size(t1, f1);
    }
    let key = (f1.to_vec(), f2.to_vec());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let (v, w) = (*f1.last().unwrap(), *f2.last().unwrap());
    let without = |t: &LabeledTree, f: &[usize], x: usize| {
        let mut g = f[..f.len() - 1].to_vec();
        g.extend(&t.children[x]);
        g
    };
    let del = forest_distance(t1, &without(t1, f1, v), t2, f2, memo) + 1;
    let ins = forest_distance(t1, f1, t2, &without(t2, f2, w), memo) + 1;
    let relabel = forest_distance(t1, &f1[..f1.len() - 1], t2, &f2[..f2.len() - 1], memo)
        + forest_distance(t1, &t1.children[v], t2, &t2.children[w], memo)
        + usize::from(t1.labels[v] != t2.labels[w]);
    let d = del.min(ins).min(relabel);
    memo.insert(key, d);
    d
}

fn brute_ted(a: &LabeledTree, b: &LabeledTree) -> usize {
    forest_distance(a, &[0], b, &[0], &mut HashMap::new())
}

#[test]
fn ted_known_values() {
    let leaf = |l: &str| LabeledTree { labels: vec![l.into()], children: vec![vec![]] };
    assert_eq!(tree_edit_distance(&leaf("a"), &leaf("a")), 0);
    assert_eq!(tree_edit_distance(&leaf("a"), &leaf("b")), 1);
    let path = LabeledTree { labels: vec!["a".into(), "b".into(), "c".into()], children: vec![vec![1], vec![2], vec![]] };
    let fan = LabeledTree { labels: vec!["a".into(), "b".into(), "c".into()], children: vec![vec![1, 2], vec![], vec![]] };
    assert_eq!(tree_edit_distance(&path, &fan), 2);
    assert_eq!(brute_ted(&path, &fan), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ted_matches_direct_recursion(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let (n, m) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let (a, b) = (random_tree(&mut rng, n), random_tree(&mut rng, m));
        prop_assert_eq!(tree_edit_distance(&a, &b), brute_ted(&a, &b));
        prop_assert_eq!(tree_edit_distance(&a, &b), tree_edit_distance(&b, &a));
    }

    #[test]
    fn similarity_is_symmetric_with_self_identity(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let a = Program::parse(&common::random_program(&mut rng)).unwrap();
        let b = Program::parse(&common::random_program(&mut rng)).unwrap();
        prop_assert_eq!(similarity(&a, &b), similarity(&b, &a));
        let s = similarity(&a, &a);
        prop_assert_eq!((s.ast_score, s.cfg_score), (1.0, 1.0));
        let ab = similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab.ast_score) && (0.0..=1.0).contains(&ab.cfg_score));
    }

    #[test]
    fn renaming_variables_keeps_full_similarity(seed in any::<u64>()) {
        let src = common::random_program(&mut common::rng(seed));
        let renamed = rename(&src);
        prop_assert_ne!(&renamed, &src);
        let (a, b) = (Program::parse(&src).unwrap(), Program::parse(&renamed).unwrap());
        let s = similarity(&a, &b);
        prop_assert_eq!(s.cfg_score, 1.0);
        prop_assert_eq!(s.ast_score, 1.0);
    }

    #[test]
    fn raising_a_threshold_never_admits(seed in any::<u64>(), ast in 0.0..1.0f64, cfg in 0.0..1.0f64, bump in 0.0..0.5f64) {
        let mut rng = common::rng(seed);
        let a = Program::parse(&common::random_program(&mut rng)).unwrap();
        let b = Program::parse(&common::random_program(&mut rng)).unwrap();
        let s = similarity(&a, &b);
        let base = comparable(s, Thresholds { ast, cfg });
        for raised in [Thresholds { ast: ast + bump, cfg }, Thresholds { ast, cfg: cfg + bump }] {
            prop_assert!(base || !comparable(s, raised));
        }
    }
}
