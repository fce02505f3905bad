//! Random sentences and joint parses for tests, fuzzing and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{SemArc, Sentence, SynArc, Token, ROOT};

const LABELS: [&str; 6] = ["sbj", "obj", "nmod", "vc", "adv", "pmod"];
const ROLES: [&str; 5] = ["A0", "A1", "A2", "AM-TMP", "C-A1"];
const POS: [&str; 6] = ["NN", "VB", "DT", "JJ", "RB", "IN"];

/// Knobs for [`joint_parse`].
#[derive(Clone, Debug)]
pub struct SynthOptions {
    /// Number of distinct word forms (and lemmas).
    pub vocab: usize,
    /// Chance that a token is a predicate.
    pub predicate_prob: f64,
    /// Chance that a predicate takes a given token as argument.
    pub arg_prob: f64,
    /// Chance that a predicate fills one of its own roles.
    pub self_prob: f64,
    /// Senses per lemma.
    pub senses: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            vocab: 50,
            predicate_prob: 0.3,
            arg_prob: 0.2,
            self_prob: 0.1,
            senses: 2,
        }
    }
}

/// Heads (1-based positions, `heads[i - 1]` for token `i`) of a uniformly
/// shaped random projective tree. The root may have several dependents.
pub fn projective_heads<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    fn span<R: Rng>(rng: &mut R, lo: usize, hi: usize, parent: usize, heads: &mut [usize]) {
        if lo > hi {
            return;
        }
        let r = rng.gen_range(lo..=hi);
        heads[r - 1] = parent;
        span(rng, lo, r - 1, r, heads);
        span(rng, r + 1, hi, r, heads);
    }
    let mut heads = vec![ROOT; n];
    let mut lo = 1;
    while lo <= n {
        let hi = rng.gen_range(lo..=n);
        let hi = if rng.gen_bool(0.7) { n } else { hi };
        span(rng, lo, hi, ROOT, &mut heads);
        lo = hi + 1;
    }
    heads
}

/// Unannotated tokens drawn from a vocabulary of `vocab` forms.
pub fn tokens<R: Rng>(rng: &mut R, n: usize, vocab: usize) -> Vec<Token> {
    (1..=n)
        .map(|i| {
            let w = rng.gen_range(0..vocab.max(1));
            let pos = POS[w % POS.len()];
            Token::new(i, &format!("w{w}"), &format!("l{w}"), pos)
        })
        .collect()
}

/// A random sentence with projective syntax, predicates with senses and a
/// semantic graph that may contain self-arcs and crossing arcs.
pub fn joint_parse<R: Rng>(rng: &mut R, n: usize, opts: &SynthOptions) -> Sentence {
    let mut s = Sentence::new(tokens(rng, n, opts.vocab));
    for (i, h) in projective_heads(rng, n).into_iter().enumerate() {
        let label = if h == ROOT { "root" } else { LABELS.choose(rng).unwrap() };
        s.syn_arcs.insert(SynArc::new(h, i + 1, label));
    }
    for t in &mut s.tokens {
        if rng.gen_bool(opts.predicate_prob) {
            let k = rng.gen_range(1..=opts.senses.max(1));
            let sense = format!("{}.{k:02}", t.lemma);
            *t = t.clone().with_sense(&sense);
        }
    }
    let preds: Vec<usize> = s.tokens.iter().filter(|t| t.is_predicate).map(|t| t.index).collect();
    for p in preds {
        for a in 1..=n {
            let prob = if a == p { opts.self_prob } else { opts.arg_prob };
            if rng.gen_bool(prob) {
                s.sem_arcs.insert(SemArc::new(p, a, ROLES.choose(rng).unwrap()));
            }
        }
    }
    s
}

/// Unannotated sentence with random predicate marks, as fed to a decoder.
pub fn decoder_input<R: Rng>(rng: &mut R, n: usize, vocab: usize, predicate_prob: f64) -> Sentence {
    let mut s = Sentence::new(tokens(rng, n, vocab));
    for t in &mut s.tokens {
        t.is_predicate = rng.gen_bool(predicate_prob);
    }
    s
}

/// Pairs of semantic arcs whose spans strictly interleave.
pub fn sem_crossings(s: &Sentence) -> usize {
    let spans: Vec<(usize, usize)> = s
        .sem_arcs
        .iter()
        .map(|a| (a.pred.min(a.arg), a.pred.max(a.arg)))
        .collect();
    let mut count = 0;
    for (i, &(a, b)) in spans.iter().enumerate() {
        for &(c, d) in &spans[i + 1..] {
            if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                count += 1;
            }
        }
    }
    count
}

/// Ten short sentences over a small vocabulary, each with at least one
/// predicate. Used to check that training can fit a corpus exactly.
pub fn overfit_fixture<R: Rng>(rng: &mut R) -> Vec<Sentence> {
    let opts = SynthOptions {
        vocab: 30,
        predicate_prob: 0.3,
        arg_prob: 0.3,
        self_prob: 0.0,
        senses: 1,
    };
    let mut out = Vec::new();
    while out.len() < 10 {
        let n = rng.gen_range(3..=7);
        let s = joint_parse(rng, n, &opts);
        if !s.sem_arcs.is_empty() && sem_crossings(&s) == 0 {
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::is_tree;
    use crate::oracle::is_projective;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_parses_are_valid_and_projective() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let n = rng.gen_range(1..=20);
            let s = joint_parse(&mut rng, n, &SynthOptions::default());
            assert!(is_tree(&s));
            assert!(is_projective(&s));
            s.validate().unwrap();
        }
    }

    #[test]
    fn crossings_are_counted() {
        let mut s = Sentence::new(tokens(&mut ChaCha8Rng::seed_from_u64(0), 4, 5));
        s.sem_arcs = [SemArc::new(1, 3, "A0"), SemArc::new(2, 4, "A1"), SemArc::new(1, 2, "A1")].into();
        assert_eq!(sem_crossings(&s), 1);
    }
}
