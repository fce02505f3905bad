//! Joint syntactic dependency parsing and semantic role labeling with a
//! transition system driven by stack LSTMs.
//!
//! The pipeline: [`corpus`] reads CoNLL data, [`oracle`] turns gold parses
//! into transition sequences over the [`state`] and [`system`] modules,
//! [`trainer`] fits an [`nn::ParserModel`], and [`decoder`] parses greedily.

pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod par;
pub mod pid;
pub mod state;
pub mod synth;
pub mod system;
pub mod trainer;
pub mod transition;

pub use config::Config;
pub use corpus::{Format, Metrics, Sentence};
pub use decoder::{parse, parse_corpus, Parsed};
pub use error::{Error, Result};
pub use nn::{ModelFile, ParserModel};
pub use state::{Mode, ParserState};
pub use trainer::{train, TrainConfig};
pub use transition::{Transition, TransitionKind};
