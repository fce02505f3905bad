//! Pseudo-projective transformation with head-label encoding.
//!
//! Non-projective arcs are lifted to the grandparent, shortest first. The
//! first lift of an arc appends the original head's label to the arc label
//! (`dep|headlabel`). Deprojectivization searches breadth-first below the
//! current head for a node carrying that label and reattaches there.

use std::collections::VecDeque;

use crate::corpus::{is_tree, Sentence, SynArc, ROOT};

const SEPARATOR: char = '|';

/// One lifting step: `dep` moved from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lift {
    pub dep: usize,
    pub from: usize,
    pub to: usize,
}

fn base_label(label: &str) -> &str {
    label.split_once(SEPARATOR).map_or(label, |(b, _)| b)
}

fn dominates(heads: &[usize], ancestor: usize, mut node: usize) -> bool {
    loop {
        if node == ancestor {
            return true;
        }
        if node == ROOT {
            return false;
        }
        node = heads[node];
    }
}

/// Non-projective arcs as `(dep)` sorted by arc length, then dependent.
fn non_projective(heads: &[usize]) -> Vec<usize> {
    let mut found: Vec<(usize, usize)> = Vec::new();
    for d in 1..heads.len() {
        let h = heads[d];
        if h == ROOT {
            continue;
        }
        let (lo, hi) = (h.min(d), h.max(d));
        if (lo + 1..hi).any(|j| !dominates(heads, h, j)) {
            found.push((hi - lo, d));
        }
    }
    found.sort_unstable();
    found.into_iter().map(|(_, d)| d).collect()
}

/// True when no arc crosses another and no arc spans a token outside its
/// head's subtree.
pub fn is_projective(sentence: &Sentence) -> bool {
    let (heads, _) = split(sentence);
    non_projective(&heads).is_empty()
}

fn split(sentence: &Sentence) -> (Vec<usize>, Vec<String>) {
    let n = sentence.len();
    let mut heads = vec![ROOT; n + 1];
    let mut labels = vec![String::new(); n + 1];
    for arc in &sentence.syn_arcs {
        heads[arc.dep] = arc.head;
        labels[arc.dep] = arc.label.clone();
    }
    (heads, labels)
}

fn join(sentence: &Sentence, heads: &[usize], labels: Vec<String>) -> Sentence {
    let mut out = sentence.clone();
    out.syn_arcs = labels
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(d, label)| SynArc {
            head: heads[d],
            dep: d,
            label,
        })
        .collect();
    out
}

/// Returns a sentence with a projective tree and the list of lifts applied.
/// Sentences without syntax, or whose arcs are not a tree, are returned
/// unchanged.
pub fn projectivize(sentence: &Sentence) -> (Sentence, Vec<Lift>) {
    if sentence.syn_arcs.is_empty() || !is_tree(sentence) {
        return (sentence.clone(), Vec::new());
    }
    let (mut heads, mut labels) = split(sentence);
    let original: Vec<String> = labels.clone();
    let mut lifted = vec![false; heads.len()];
    let mut trace = Vec::new();
    while let Some(&d) = non_projective(&heads).first() {
        let h = heads[d];
        let to = heads[h];
        if !lifted[d] {
            labels[d] = format!("{}{}{}", original[d], SEPARATOR, base_label(&original[h]));
            lifted[d] = true;
        }
        heads[d] = to;
        trace.push(Lift { dep: d, from: h, to });
    }
    (join(sentence, &heads, labels), trace)
}

/// Reattaches lifted arcs using their encoded head labels and strips the
/// encoding. Arcs whose head label cannot be found stay in place.
pub fn deprojectivize(sentence: &Sentence) -> Sentence {
    if !sentence.syn_arcs.iter().any(|a| a.label.contains(SEPARATOR)) {
        return sentence.clone();
    }
    let (mut heads, mut labels) = split(sentence);
    let n = heads.len() - 1;
    let children = |heads: &[usize]| {
        let mut c = vec![Vec::new(); n + 1];
        for d in 1..=n {
            c[heads[d]].push(d);
        }
        c
    };

    // Resolve one lifted token per pass, top-down, so that a token whose
    // original head is itself lifted waits until that head is back in place.
    let split_label = |label: &str| {
        label
            .split_once(SEPARATOR)
            .map(|(a, b)| (a.to_owned(), b.to_owned()))
    };
    let mut unresolved = vec![false; n + 1];
    loop {
        let kids = children(&heads);
        let mut order = Vec::new();
        let mut queue = VecDeque::from([ROOT]);
        while let Some(node) = queue.pop_front() {
            if node != ROOT && labels[node].contains(SEPARATOR) && !unresolved[node] {
                order.push(node);
            }
            queue.extend(kids[node].iter().copied());
        }
        let mut progress = false;
        for &d in &order {
            let (dep_label, wanted) = split_label(&labels[d]).expect("contains the separator");
            let mut queue: VecDeque<usize> = kids[heads[d]].iter().copied().collect();
            let mut target = None;
            while let Some(node) = queue.pop_front() {
                if node == d {
                    continue;
                }
                if base_label(&labels[node]) == wanted {
                    target = Some(node);
                    break;
                }
                queue.extend(kids[node].iter().copied());
            }
            if let Some(t) = target {
                heads[d] = t;
                labels[d] = dep_label;
                progress = true;
                break;
            }
        }
        if !progress {
            if order.is_empty() {
                break;
            }
            // nothing resolvable in this pass: give up on the first one
            unresolved[order[0]] = true;
        }
    }
    for label in labels.iter_mut() {
        if let Some((dep_label, _)) = split_label(label) {
            *label = dep_label;
        }
    }
    join(sentence, &heads, labels)
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{is_tree, Token};

    fn tree(heads: &[usize]) -> Sentence {
        let n = heads.len();
        let mut s = Sentence::new((1..=n).map(|i| Token::new(i, "w", "w", "X")).collect());
        s.syn_arcs = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| SynArc::new(h, i + 1, &format!("l{}", i + 1)))
            .collect();
        s
    }

    /// Independent check: no two arcs cross, with the root at position 0.
    fn crossing_free(s: &Sentence) -> bool {
        let spans: Vec<(usize, usize)> = s
            .syn_arcs
            .iter()
            .map(|a| (a.head.min(a.dep), a.head.max(a.dep)))
            .collect();
        spans.iter().all(|&(a, b)| {
            spans
                .iter()
                .all(|&(c, d)| !((a < c && c < b && b < d) || (c < a && a < d && d < b)))
        })
    }

    #[test]
    fn projective_tree_unchanged() {
        let s = tree(&[2, 0, 2, 3]);
        let (p, trace) = projectivize(&s);
        assert_eq!(p, s);
        assert!(trace.is_empty());
        assert_eq!(deprojectivize(&s), s);
    }

    #[test]
    fn minimal_non_projective_tree() {
        // 0->1, 1->2, 1->3, 2->4: the arc 2->4 crosses 1->3.
        let s = tree(&[0, 1, 1, 2]);
        assert!(!crossing_free(&s));
        assert!(!is_projective(&s));
        let (p, trace) = projectivize(&s);
        assert!(crossing_free(&p));
        assert!(is_projective(&p));
        assert_eq!(trace, vec![Lift { dep: 4, from: 2, to: 1 }]);
        assert!(p.syn_arcs.contains(&SynArc::new(1, 4, "l4|l2")));
        assert_eq!(deprojectivize(&p), s);
    }

    #[test]
    fn cyclic_input_is_left_alone() {
        // 2 and 3 head each other
        let s = tree(&[0, 3, 2, 1]);
        assert!(!is_tree(&s));
        let (p, lifts) = projectivize(&s);
        assert_eq!(p, s);
        assert!(lifts.is_empty());
    }

    #[test]
    fn unresolvable_label_is_stripped_in_place() {
        let mut s = tree(&[2, 0, 2]);
        s.syn_arcs.remove(&SynArc::new(2, 3, "l3"));
        s.syn_arcs.insert(SynArc::new(2, 3, "l3|nothere"));
        let d = deprojectivize(&s);
        assert!(d.syn_arcs.contains(&SynArc::new(2, 3, "l3")));
    }

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(rng);
        let mut attached = vec![ROOT];
        let mut heads = vec![0; n];
        for d in order {
            heads[d - 1] = *attached.choose(rng).unwrap();
            attached.push(d);
        }
        heads
    }

    #[test]
    fn inverse_on_single_lift_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for _ in 0..3000 {
            let n = rng.gen_range(2..=12);
            let s = tree(&random_tree(&mut rng, n));
            assert!(is_tree(&s));
            let (p, trace) = projectivize(&s);
            assert!(is_tree(&p));
            assert!(crossing_free(&p), "{:?}", p.syn_arcs);
            let mut lifts = vec![0; n + 1];
            for l in &trace {
                lifts[l.dep] += 1;
            }
            if lifts.iter().all(|&c| c <= 1) {
                assert_eq!(deprojectivize(&p), s, "trace {trace:?}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
}
