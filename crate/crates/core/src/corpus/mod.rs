//! Sentences, CoNLL 2008/2009 column files, embeddings and evaluation.

mod conll;
mod embeddings;
mod eval;

use std::collections::BTreeSet;

pub use conll::{read_conll, read_conll_str, write_conll, write_conll_string, Format};
pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingTable, DEFAULT_OOV_SEED};
pub use eval::{evaluate, Metrics};

use crate::error::{Error, Result};

/// Index of the artificial root node in arc triples.
pub const ROOT: usize = 0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    /// Predicted lemma.
    pub lemma: String,
    /// Predicted part-of-speech tag.
    pub pos: String,
    pub is_predicate: bool,
    /// Predicate sense such as `expect.01`.
    pub sense: Option<String>,
}

impl Token {
    pub fn new(index: usize, form: &str, lemma: &str, pos: &str) -> Self {
        Token {
            index,
            form: form.to_owned(),
            lemma: lemma.to_owned(),
            pos: pos.to_owned(),
            is_predicate: false,
            sense: None,
        }
    }

    pub fn with_sense(mut self, sense: &str) -> Self {
        self.is_predicate = true;
        self.sense = Some(sense.to_owned());
        self
    }
}

/// A labeled syntactic dependency; `head == ROOT` attaches to the root.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SynArc {
    pub head: usize,
    pub dep: usize,
    pub label: String,
}

/// A labeled semantic dependency from a predicate to one of its arguments.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SemArc {
    pub pred: usize,
    pub arg: usize,
    pub role: String,
}

impl SynArc {
    pub fn new(head: usize, dep: usize, label: &str) -> Self {
        SynArc {
            head,
            dep,
            label: label.to_owned(),
        }
    }
}

impl SemArc {
    pub fn new(pred: usize, arg: usize, role: &str) -> Self {
        SemArc {
            pred,
            arg,
            role: role.to_owned(),
        }
    }
}

/// A sentence with (possibly empty) syntactic and semantic annotation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub syn_arcs: BTreeSet<SynArc>,
    pub sem_arcs: BTreeSet<SemArc>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    /// Head and label per token, indexed by position (slot 0 is unused).
    pub fn heads(&self) -> Vec<Option<(usize, &str)>> {
        let mut heads = vec![None; self.len() + 1];
        for arc in &self.syn_arcs {
            if arc.dep <= self.len() {
                heads[arc.dep] = Some((arc.head, arc.label.as_str()));
            }
        }
        heads
    }

    /// Predicate flags indexed by position (slot 0, the root, is never a predicate).
    pub fn predicate_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len() + 1];
        for t in &self.tokens {
            mask[t.index] = t.is_predicate;
        }
        mask
    }

    /// A copy of the tokens with all annotation removed, as a parser sees it.
    pub fn unannotated(&self) -> Sentence {
        let tokens = self
            .tokens
            .iter()
            .map(|t| Token {
                is_predicate: false,
                sense: None,
                ..t.clone()
            })
            .collect();
        Sentence::new(tokens)
    }

    /// Checks the type invariants: sequential indices, sense only on
    /// predicates, a tree (when any syntax is present), and semantic arcs
    /// headed by predicates.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(Error::Invalid(format!(
                    "token {} has index {}",
                    i + 1,
                    t.index
                )));
            }
            if t.sense.is_some() && !t.is_predicate {
                return Err(Error::Invalid(format!(
                    "token {} has a sense but is not a predicate",
                    t.index
                )));
            }
        }
        if !self.syn_arcs.is_empty() && !is_tree(self) {
            return Err(Error::Invalid(
                "syntactic arcs do not form a tree".to_owned(),
            ));
        }
        let n = self.len();
        for arc in &self.sem_arcs {
            if arc.pred == ROOT || arc.pred > n || arc.arg == ROOT || arc.arg > n {
                return Err(Error::Invalid(format!(
                    "semantic arc {}->{} out of range",
                    arc.pred, arc.arg
                )));
            }
            if !self.token(arc.pred).is_predicate {
                return Err(Error::Invalid(format!(
                    "semantic arc headed by non-predicate token {}",
                    arc.pred
                )));
            }
        }
        Ok(())
    }
}

/// True when every token has exactly one head in range and following heads
/// from any token reaches the root.
pub fn is_tree(sentence: &Sentence) -> bool {
    let n = sentence.len();
    let mut heads = vec![None; n + 1];
    for arc in &sentence.syn_arcs {
        if arc.dep == ROOT || arc.dep > n || arc.head > n || heads[arc.dep].is_some() {
            return false;
        }
        heads[arc.dep] = Some(arc.head);
    }
    let heads: Vec<usize> = match heads[1..].iter().copied().collect::<Option<Vec<_>>>() {
        Some(h) => std::iter::once(ROOT).chain(h).collect(),
        None => return false,
    };
    reaches_root(&heads)
}

/// `heads[0]` is ignored; `heads[d]` is the head of token `d`.
pub(crate) fn reaches_root(heads: &[usize]) -> bool {
    let n = heads.len() - 1;
    // 0 = unvisited, 1 = on the current path, 2 = known to reach the root
    let mut mark = vec![0u8; n + 1];
    mark[ROOT] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut cur = start;
        while mark[cur] == 0 {
            mark[cur] = 1;
            path.push(cur);
            cur = heads[cur];
        }
        if mark[cur] == 1 {
            return false;
        }
        for p in path {
            mark[p] = 2;
        }
    }
    true
}
