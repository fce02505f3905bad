use std::io;

use thiserror::Error;

use crate::transition::{Constraint, Transition};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: head {head} out of range for a sentence of {len} tokens")]
    HeadOutOfRange { line: usize, head: usize, len: usize },

    #[error("line {line}: token {token} has more than one head")]
    MultipleHeads { line: usize, token: usize },

    #[error("sentence ending at line {line}: syntactic arcs contain a cycle")]
    Cycle { line: usize },

    #[error("embeddings line {line}: expected {expected} values, found {found}")]
    EmbeddingDimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("embeddings line {line}: {message}")]
    EmbeddingFormat { line: usize, message: String },

    #[error("gold and predicted corpora differ: {0}")]
    LengthMismatch(String),

    #[error("no transition is allowed in a terminal state")]
    Terminal,

    #[error("transition {transition} is not allowed: {constraint}")]
    IllegalTransition {
        transition: Transition,
        constraint: Constraint,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("pop on an empty stack")]
    EmptyStack,

    #[error("cannot score an empty set of transitions")]
    EmptyAllowed,

    #[error("gold transition {0} is not in the allowed set")]
    GoldNotAllowed(Transition),

    #[error("no transition allowed in a non-terminal state:\n{0}")]
    Deadlock(String),

    #[error("transition cap of {cap} exceeded for a sentence of {tokens} tokens")]
    TransitionCap { cap: usize, tokens: usize },

    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("token {0} is marked as a predicate but has an empty lemma")]
    EmptyLemma(usize),

    #[error("cannot parse transition {0:?}")]
    BadTransition(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}
