//! Parse fragments and the joint parser state.
//!
//! The state keeps the symbolic side of every stack and buffer element. The
//! learned side is delegated to a [`Representation`], which receives every
//! composition and every push/pop so that it can mirror the structures with
//! stack LSTMs. [`Symbolic`] is the no-op representation used by the oracle.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{SemArc, SynArc, ROOT};
use crate::error::Error;
use crate::transition::Transition;

/// Which transitions and stacks are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Joint,
    /// Arc-eager syntax only; shift and right-arc move the buffer front.
    SyntaxOnly,
    /// Semantic transitions only; the syntactic stack stays empty.
    SemanticsOnly,
    /// Joint transitions where syntax is supplied by a separate syntax-only
    /// model and only semantic transitions are predicted.
    Hybrid,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::SyntaxOnly => "syntax-only",
            Mode::SemanticsOnly => "semantics-only",
            Mode::Hybrid => "hybrid",
        }
    }

    pub fn has_syntax(self) -> bool {
        self != Mode::SemanticsOnly
    }

    pub fn has_semantics(self) -> bool {
        self != Mode::SyntaxOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "joint" => Ok(Mode::Joint),
            "syntax-only" | "syntax" => Ok(Mode::SyntaxOnly),
            "semantics-only" | "semantics" => Ok(Mode::SemanticsOnly),
            "hybrid" => Ok(Mode::Hybrid),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Syntactic,
    Semantic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Syntactic,
    Semantic,
    Predicate,
}

/// Symbolic structure of a fragment: a ternary tree of (head, dependent,
/// label) attachments over atomic tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FragmentTree {
    Atom(usize),
    Attach {
        head: Arc<FragmentTree>,
        dep: Arc<FragmentTree>,
        label: String,
        layer: Layer,
    },
}

impl FragmentTree {
    pub fn root_token(&self) -> usize {
        match self {
            FragmentTree::Atom(t) => *t,
            FragmentTree::Attach { head, .. } => head.root_token(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            FragmentTree::Atom(_) => 0,
            FragmentTree::Attach { head, dep, .. } => 1 + head.depth().max(dep.depth()),
        }
    }
}

/// A stack or buffer element: its symbolic tree plus its learned vector.
#[derive(Clone, Debug)]
pub struct Fragment<R> {
    pub token: usize,
    pub tree: Arc<FragmentTree>,
    pub repr: R,
}

impl<R> Fragment<R> {
    pub(crate) fn attach(head: &Fragment<R>, dep: &Fragment<R>, label: &str, layer: Layer, repr: R) -> Self {
        Fragment {
            token: head.token,
            tree: Arc::new(FragmentTree::Attach {
                head: head.tree.clone(),
                dep: dep.tree.clone(),
                label: label.to_owned(),
                layer,
            }),
            repr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StackId {
    Syntactic,
    Semantic,
    Buffer,
    Actions,
}

/// Receives the learned-vector side of every state update.
pub trait Representation {
    type Repr: Clone;

    /// Atomic vector for a token; `ROOT` gets the dedicated root vector.
    fn atom(&mut self, token: usize) -> Self::Repr;
    fn compose_syn(&mut self, head: &Self::Repr, dep: &Self::Repr, label: &str) -> Self::Repr;
    fn compose_sem(&mut self, head: &Self::Repr, dep: &Self::Repr, role: &str) -> Self::Repr;
    fn compose_pred(&mut self, word: &Self::Repr, sense: &str) -> Self::Repr;
    fn push(&mut self, stack: StackId, item: &Self::Repr);
    fn pop(&mut self, stack: StackId);
    fn record(&mut self, transition: &Transition);
}

/// Representation that carries no vectors.
#[derive(Clone, Copy, Debug, Default)]
pub struct Symbolic;

impl Representation for Symbolic {
    type Repr = ();

    fn atom(&mut self, _: usize) {}
    fn compose_syn(&mut self, _: &(), _: &(), _: &str) {}
    fn compose_sem(&mut self, _: &(), _: &(), _: &str) {}
    fn compose_pred(&mut self, _: &(), _: &str) {}
    fn push(&mut self, _: StackId, _: &()) {}
    fn pop(&mut self, _: StackId) {}
    fn record(&mut self, _: &Transition) {}
}

/// The dependency created by the most recent transition, for traces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Created {
    /// `dep <-label- head` with the dependent on the left.
    LeftArc { left: usize, right: usize, label: String, semantic: bool },
    /// `head -label-> dep` with the head on the left.
    RightArc { left: usize, right: usize, label: String, semantic: bool },
    SelfArc { token: usize, label: String },
}

/// Upper bound on transitions per token (root included) for any run.
pub const TRANSITIONS_PER_TOKEN: usize = 32;

pub fn transition_cap(tokens: usize) -> usize {
    TRANSITIONS_PER_TOKEN * (tokens + 1)
}

#[derive(Clone, Debug)]
pub struct ParserState<R> {
    pub(crate) mode: Mode,
    pub(crate) n: usize,
    pub(crate) syn: Vec<Fragment<R>>,
    pub(crate) sem: Vec<Fragment<R>>,
    /// Buffer elements with the front at the end.
    pub(crate) buffer: Vec<Fragment<R>>,
    pub(crate) history: Vec<Transition>,
    pub(crate) phase: Phase,
    pub(crate) syn_heads: Vec<Option<(usize, String)>>,
    pub(crate) sem_pairs: HashSet<(usize, usize)>,
    pub(crate) sem_arcs: Vec<SemArc>,
    pub(crate) senses: Vec<Option<String>>,
    pub(crate) eligible: Vec<bool>,
    pub(crate) last_swapped: Option<(usize, usize)>,
    pub(crate) last_created: Option<Created>,
}

impl<R: Clone> ParserState<R> {
    /// Initial state for `n` tokens: empty stacks, the tokens in order on the
    /// buffer followed by the root. `eligible[i]` says whether token `i` may
    /// become a predicate; slot 0 is the root.
    pub fn new<P: Representation<Repr = R>>(
        n: usize,
        eligible: &[bool],
        mode: Mode,
        repr: &mut P,
    ) -> Self {
        assert_eq!(eligible.len(), n + 1, "one predicate flag per token plus root");
        let mut buffer = Vec::with_capacity(n + 1);
        for token in std::iter::once(ROOT).chain((1..=n).rev()) {
            let r = repr.atom(token);
            repr.push(StackId::Buffer, &r);
            buffer.push(Fragment {
                token,
                tree: Arc::new(FragmentTree::Atom(token)),
                repr: r,
            });
        }
        let mut eligible = eligible.to_vec();
        eligible[ROOT] = false;
        ParserState {
            mode,
            n,
            syn: Vec::new(),
            sem: Vec::new(),
            buffer,
            history: Vec::new(),
            phase: if mode == Mode::SemanticsOnly {
                Phase::Semantic
            } else {
                Phase::Syntactic
            },
            syn_heads: vec![None; n + 1],
            sem_pairs: HashSet::new(),
            sem_arcs: Vec::new(),
            senses: vec![None; n + 1],
            eligible,
            last_swapped: None,
            last_created: None,
        }
    }
}

impl<R> ParserState<R> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Syntactic stack, bottom first.
    pub fn syntactic_stack(&self) -> &[Fragment<R>] {
        &self.syn
    }

    /// Semantic stack, bottom first.
    pub fn semantic_stack(&self) -> &[Fragment<R>] {
        &self.sem
    }

    /// Buffer elements, front first.
    pub fn buffer(&self) -> impl Iterator<Item = &Fragment<R>> {
        self.buffer.iter().rev()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn front(&self) -> Option<usize> {
        self.buffer.last().map(|f| f.token)
    }

    pub fn syn_top(&self) -> Option<usize> {
        self.syn.last().map(|f| f.token)
    }

    pub fn sem_top(&self) -> Option<usize> {
        self.sem.last().map(|f| f.token)
    }

    pub fn sem_second(&self) -> Option<usize> {
        self.sem.len().checked_sub(2).map(|i| self.sem[i].token)
    }

    pub fn history(&self) -> &[Transition] {
        &self.history
    }

    pub fn last_swapped(&self) -> Option<(usize, usize)> {
        self.last_swapped
    }

    pub fn last_created(&self) -> Option<&Created> {
        self.last_created.as_ref()
    }

    pub fn is_eligible(&self, token: usize) -> bool {
        self.eligible[token]
    }

    pub fn syn_head(&self, dep: usize) -> Option<(usize, &str)> {
        self.syn_heads[dep].as_ref().map(|(h, l)| (*h, l.as_str()))
    }

    pub fn has_sem_arc(&self, pred: usize, arg: usize) -> bool {
        self.sem_pairs.contains(&(pred, arg))
    }

    pub fn sense(&self, token: usize) -> Option<&str> {
        self.senses[token].as_deref()
    }

    /// Semantic arcs in creation order.
    pub fn sem_arcs(&self) -> &[SemArc] {
        &self.sem_arcs
    }

    fn single_root(stack: &[Fragment<R>]) -> bool {
        stack.len() == 1 && stack[0].token == ROOT
    }

    /// Empty buffer and a single root-headed structure on each active stack.
    pub fn is_terminal(&self) -> bool {
        if !self.buffer.is_empty() {
            return false;
        }
        let syn_done = !self.mode.has_syntax() || Self::single_root(&self.syn);
        let sem_done = !self.mode.has_semantics() || Self::single_root(&self.sem);
        syn_done && sem_done
    }

    pub fn syn_arcs(&self) -> BTreeSet<SynArc> {
        self.syn_heads
            .iter()
            .enumerate()
            .filter_map(|(d, h)| {
                h.as_ref().map(|(h, l)| SynArc {
                    head: *h,
                    dep: d,
                    label: l.clone(),
                })
            })
            .collect()
    }

    /// Predicate senses assigned so far, indexed by token.
    pub fn senses(&self) -> &[Option<String>] {
        &self.senses
    }

    /// One trace line: last transition, S, M, B (front first) and the
    /// dependency created by the last transition. `forms[0]` names the root.
    pub fn trace_row(&self, forms: &[String]) -> String {
        let name = |t: usize| forms[t].as_str();
        let pred_name = |t: usize| self.senses[t].as_deref().unwrap_or(&forms[t]);
        let list = |items: &mut dyn Iterator<Item = usize>| {
            let v: Vec<&str> = items.map(name).collect();
            format!("[{}]", v.join(", "))
        };
        let dep = match &self.last_created {
            None => "---".to_owned(),
            Some(Created::LeftArc { left, right, label, semantic }) => {
                let head = if *semantic { pred_name(*right) } else { name(*right) };
                format!("{} <-{}- {}", name(*left), label, head)
            }
            Some(Created::RightArc { left, right, label, semantic }) => {
                let head = if *semantic { pred_name(*left) } else { name(*left) };
                format!("{} -{}-> {}", head, label, name(*right))
            }
            Some(Created::SelfArc { token, label }) => {
                format!("{} <-{}-> {}", pred_name(*token), label, pred_name(*token))
            }
        };
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.history.last().map(|t| t.to_string()).unwrap_or_default(),
            list(&mut self.syn.iter().map(|f| f.token)),
            list(&mut self.sem.iter().map(|f| f.token)),
            list(&mut self.buffer.iter().rev().map(|f| f.token)),
            dep
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forms(words: &[&str]) -> Vec<String> {
        std::iter::once("root")
            .chain(words.iter().copied())
            .map(str::to_owned)
            .collect()
    }

    #[test]
    fn initial_buffer_ends_with_root() {
        let words = ["all", "are", "expected", "to", "reopen", "soon"];
        let s = ParserState::new(6, &[false; 7], Mode::Joint, &mut Symbolic);
        assert_eq!(
            s.trace_row(&forms(&words)),
            "\t[]\t[]\t[all, are, expected, to, reopen, soon, root]\t---"
        );
        assert_eq!(s.buffer_len(), 7);
        assert!(s.syntactic_stack().is_empty() && s.semantic_stack().is_empty());
        assert!(s.history().is_empty());
        assert_eq!(s.phase(), Phase::Syntactic);
        assert!(!s.is_terminal());
    }

    #[test]
    fn one_token_initial_state() {
        let s = ParserState::new(1, &[false; 2], Mode::Joint, &mut Symbolic);
        let b: Vec<usize> = s.buffer().map(|f| f.token).collect();
        assert_eq!(b, vec![1, ROOT]);
    }

    #[test]
    fn empty_buffer_with_two_syntactic_items_is_not_terminal() {
        let mut s = ParserState::new(1, &[false; 2], Mode::Joint, &mut Symbolic);
        let atom = |t| Fragment {
            token: t,
            tree: Arc::new(FragmentTree::Atom(t)),
            repr: (),
        };
        s.buffer.clear();
        s.syn = vec![atom(1), atom(ROOT)];
        s.sem = vec![atom(ROOT)];
        assert!(!s.is_terminal());
        s.syn.remove(0);
        assert!(s.is_terminal());
    }

    #[test]
    fn mode_names_parse() {
        for m in [Mode::Joint, Mode::SyntaxOnly, Mode::SemanticsOnly, Mode::Hybrid] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
    }
}
