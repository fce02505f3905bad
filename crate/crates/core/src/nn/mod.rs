//! Differentiable building blocks and the parser network.

pub mod gradcheck;
pub mod lstm;
pub mod model;
pub mod serialize;
pub mod stack_lstm;
pub mod tape;

pub use lstm::{lstm_step, LstmLayer, LstmState};
pub use model::{argmax, compose, score_transitions, summarize_state, ActionVocab, Encoder, Hyper, ParserModel, Vocab};
pub use serialize::{ModelFile, MAGIC, VERSION};
pub use stack_lstm::{StackLstm, StackLstmParams};
pub use tape::{Gradients, ParamId, ParamStore, Tape, Tensor, Var};
