//! Greedy decoding with a trained model.

use std::collections::BTreeMap;

use crate::corpus::{Sentence, Token};
use crate::error::{Error, Result};
use crate::nn::model::{argmax, Encoder, ParserModel};
use crate::oracle::{deprojectivize, next_syntactic, recovered_parse, GoldParse};
use crate::state::{transition_cap, Mode, ParserState, Phase};
use crate::transition::Transition;

/// A decoded sentence and the transitions that built it.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed {
    pub sentence: Sentence,
    pub transitions: Vec<Transition>,
}

/// Sense for a predicate token. Seen lemmas keep the decoder's choice;
/// unseen lemmas, or seen ones that were never disambiguated, get
/// `lemma.01`.
pub fn resolve_sense(token: &Token, chosen: Option<&str>, lemma_senses: &BTreeMap<String, Vec<String>>) -> Result<String> {
    if token.lemma.is_empty() {
        return Err(Error::EmptyLemma(token.index));
    }
    match (lemma_senses.contains_key(&token.lemma), chosen) {
        (true, Some(s)) => Ok(s.to_owned()),
        _ => Ok(format!("{}.01", token.lemma)),
    }
}

fn dump<R: Clone>(state: &ParserState<R>, sentence: &Sentence) -> String {
    let forms: Vec<String> = std::iter::once("root".to_owned())
        .chain(sentence.tokens.iter().map(|t| t.form.clone()))
        .collect();
    format!(
        "{}\nallowed kinds: {:?}\nhistory: {}",
        state.trace_row(&forms),
        state.allowed().unwrap_or_default(),
        state
            .history()
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )
}

fn finish(model: &ParserModel, input: &Sentence, raw: Sentence, mode: Mode) -> Result<Sentence> {
    let mut out = input.unannotated();
    if mode.has_syntax() {
        out.syn_arcs = deprojectivize(&raw).syn_arcs;
    }
    if mode.has_semantics() {
        out.sem_arcs = raw.sem_arcs;
        for (t, r) in out.tokens.iter_mut().zip(&raw.tokens) {
            if input.token(t.index).is_predicate {
                let sense = resolve_sense(t, r.sense.as_deref(), &model.lemma_senses)?;
                t.is_predicate = true;
                t.sense = Some(sense);
            }
        }
    }
    Ok(out)
}

/// Parses one sentence. Predicate candidates are the tokens marked
/// `is_predicate` in the input.
pub fn parse(model: &ParserModel, sentence: &Sentence) -> Result<Parsed> {
    let (raw, transitions) = parse_raw(model, sentence)?;
    Ok(Parsed {
        sentence: finish(model, sentence, raw, model.mode)?,
        transitions,
    })
}

/// Decoded parse before deprojectivization and sense resolution.
pub(crate) fn parse_raw(model: &ParserModel, sentence: &Sentence) -> Result<(Sentence, Vec<Transition>)> {
    for t in &sentence.tokens {
        if t.is_predicate && t.lemma.is_empty() {
            return Err(Error::EmptyLemma(t.index));
        }
    }
    match model.mode {
        Mode::Hybrid => {
            let syntax = model
                .syntax
                .as_deref()
                .ok_or_else(|| Error::Invalid("hybrid model has no syntax model".into()))?;
            let (predicted, _) = parse_raw(syntax, sentence)?;
            let gold = GoldParse::new(&predicted);
            decode(model, sentence, Mode::Hybrid, Some(&gold))
        }
        mode => decode(model, sentence, mode, None),
    }
}

/// Runs `model` greedily in `mode`. When `forced` is given, syntactic steps
/// follow it instead of the model.
fn decode(model: &ParserModel, sentence: &Sentence, mode: Mode, forced: Option<&GoldParse>) -> Result<(Sentence, Vec<Transition>)> {
    let n = sentence.len();
    let mut enc = Encoder::new(model, model.input(sentence), None);
    let mut state = ParserState::new(n, &sentence.predicate_mask(), mode, &mut enc);
    let cap = transition_cap(n);
    while !state.is_terminal() {
        if state.history().len() >= cap {
            return Err(Error::TransitionCap { cap, tokens: n });
        }
        let t = match forced {
            Some(gold) if state.phase() == Phase::Syntactic => next_syntactic(&state, gold)?,
            _ => {
                let cands = enc.candidates(&state)?;
                let pick = match cands.len() {
                    0 => return Err(Error::Deadlock(dump(&state, sentence))),
                    1 => cands[0],
                    _ => {
                        let y = enc.summarize();
                        let s = enc.scores(y, &cands)?;
                        cands[argmax(enc.tape.value(s))]
                    }
                };
                model.actions.action(pick).clone()
            }
        };
        state.apply(t, &mut enc)?;
    }
    Ok((recovered_parse(sentence, &state), state.history().to_vec()))
}

/// Parses every sentence, in parallel when the `parallel` feature is on.
pub fn parse_corpus(model: &ParserModel, corpus: &[Sentence]) -> Result<Vec<Parsed>> {
    crate::par::map(corpus, |s| parse(model, s)).into_iter().collect()
}

/// [`parse_corpus`] on the calling thread only.
pub fn parse_corpus_sequential(model: &ParserModel, corpus: &[Sentence]) -> Result<Vec<Parsed>> {
    corpus.iter().map(|s| parse(model, s)).collect()
}
