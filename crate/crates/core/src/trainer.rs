//! Supervised training from oracle transition sequences.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{evaluate, EmbeddingTable, Metrics, Sentence};
use crate::decoder::{parse_corpus, parse_raw};
use crate::error::{Error, Result};
use crate::nn::model::{argmax, Encoder, Hyper, ParserModel, SentenceInput, UNK};
use crate::nn::tape::{Gradients, Var};
use crate::oracle::{projectivize, to_transitions};
use crate::state::{Mode, ParserState};
use crate::transition::Transition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub dropout: f64,
    /// Probability of replacing a singleton word by the unknown word.
    pub unk_prob: f64,
    /// Maximum gradient norm; no clipping when absent.
    pub clip: Option<f64>,
    pub hyper: Hyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Joint,
            seed: 1,
            epochs: 30,
            patience: 5,
            learning_rate: 0.1,
            decay: 0.1,
            dropout: 0.2,
            unk_prob: 0.5,
            clip: None,
            hyper: Hyper::default(),
        }
    }
}

/// `eta0 / (1 + decay * epoch)`.
pub fn learning_rate(eta0: f64, decay: f64, epoch: usize) -> f64 {
    eta0 / (1.0 + decay * epoch as f64)
}

/// Rescales `grads` to norm at most `max_norm`.
pub fn clip(grads: &mut Gradients, max_norm: f64) {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
}

fn singletons(corpus: &[Sentence]) -> HashMap<&str, usize> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in corpus.iter().flat_map(|s| &s.tokens) {
        *counts.entry(t.form.as_str()).or_default() += 1;
    }
    counts.retain(|_, c| *c == 1);
    counts
}

/// Replaces each word form that occurs once in `corpus` by the unknown word
/// with probability `prob`.
pub fn singleton_unking<R: Rng>(corpus: &[Sentence], prob: f64, rng: &mut R) -> Vec<Sentence> {
    let once = singletons(corpus);
    corpus
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for t in &mut s.tokens {
                if once.contains_key(t.form.as_str()) && rng.gen::<f64>() < prob {
                    t.form = UNK.to_owned();
                }
            }
            s
        })
        .collect()
}

/// Log-loss of `gold` in `state`, normalized over the allowed actions only.
/// `None` when `gold` is the only allowed action, where the loss is exactly
/// zero.
pub fn step_loss<R: Clone>(enc: &mut Encoder<'_>, state: &ParserState<R>, gold: &Transition) -> Result<Option<Var>> {
    let cands = enc.candidates(state)?;
    let id = enc
        .model()
        .actions
        .get(gold)
        .ok_or_else(|| Error::GoldNotAllowed(gold.clone()))?;
    let pos = cands
        .iter()
        .position(|&c| c == id)
        .ok_or_else(|| Error::GoldNotAllowed(gold.clone()))?;
    if cands.len() == 1 {
        return Ok(None);
    }
    let y = enc.summarize();
    let s = enc.scores(y, &cands)?;
    Ok(Some(enc.tape.neg_log_softmax(s, pos)))
}

/// A training sentence with its oracle sequence.
#[derive(Clone, Debug)]
pub struct Instance {
    pub sentence: Sentence,
    pub transitions: Vec<Transition>,
    pub exact: bool,
}

/// Oracle instances for `corpus` in `mode` (syntax projectivized first).
pub fn instances(corpus: &[Sentence], mode: Mode) -> Result<Vec<Instance>> {
    crate::par::map(corpus, |s| {
        let (proj, _) = projectivize(s);
        let out = to_transitions(&proj, mode)?;
        Ok(Instance {
            sentence: proj,
            transitions: out.transitions,
            exact: out.exact,
        })
    })
    .into_iter()
    .collect()
}

/// Summed loss of one instance under `model` and its gradients. Only
/// semantic steps contribute in hybrid mode.
pub fn sentence_loss(
    model: &ParserModel,
    inst: &Instance,
    input: SentenceInput,
    dropout: Option<(f64, u64)>,
) -> Result<(f64, Gradients)> {
    let mut enc = Encoder::new(model, input, dropout);
    let mut state = ParserState::new(inst.sentence.len(), &inst.sentence.predicate_mask(), model.mode, &mut enc);
    let mut losses = Vec::new();
    for t in &inst.transitions {
        if !(model.mode == Mode::Hybrid && t.kind().is_syntactic()) {
            if let Some(l) = step_loss(&mut enc, &state, t)? {
                losses.push(l);
            }
        }
        state.apply(t.clone(), &mut enc)?;
    }
    let total = enc.tape.sum(&losses);
    Ok((enc.tape.scalar(total), enc.tape.backward(total)))
}

/// Fraction of gold steps (with more than one allowed action) where the
/// model's argmax is the gold action, following the gold sequence.
pub fn transition_accuracy(model: &ParserModel, instances: &[Instance]) -> Result<f64> {
    let counts = crate::par::map(instances, |inst| -> Result<(usize, usize)> {
        let mut enc = Encoder::new(model, model.input(&inst.sentence), None);
        let mut state = ParserState::new(inst.sentence.len(), &inst.sentence.predicate_mask(), model.mode, &mut enc);
        let (mut right, mut total) = (0, 0);
        for t in &inst.transitions {
            if !(model.mode == Mode::Hybrid && t.kind().is_syntactic()) {
                let cands = enc.candidates(&state)?;
                if cands.len() > 1 {
                    let y = enc.summarize();
                    let s = enc.scores(y, &cands)?;
                    let pick = cands[argmax(enc.tape.value(s))];
                    total += 1;
                    right += usize::from(model.actions.action(pick) == t);
                }
            }
            state.apply(t.clone(), &mut enc)?;
        }
        Ok((right, total))
    });
    let (mut right, mut total) = (0, 0);
    for c in counts {
        let (r, t) = c?;
        right += r;
        total += t;
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}

/// The dev score used for early stopping in each mode.
pub fn dev_score(metrics: &Metrics, mode: Mode) -> f64 {
    match mode {
        Mode::SyntaxOnly => metrics.las,
        Mode::SemanticsOnly | Mode::Hybrid => metrics.sem_f1,
        Mode::Joint => metrics.macro_f1,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub stage: Mode,
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
    pub train_accuracy: f64,
    pub dev: Option<Metrics>,
}

/// Epoch-by-epoch SGD over a fixed set of instances.
pub struct Trainer {
    pub model: ParserModel,
    config: TrainConfig,
    instances: Vec<Instance>,
    singleton: Vec<Vec<bool>>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: ParserModel, corpus: &[Sentence], config: &TrainConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let instances = instances(corpus, model.mode)?;
        let once = singletons(corpus);
        let singleton = corpus
            .iter()
            .map(|s| s.tokens.iter().map(|t| once.contains_key(t.form.as_str())).collect())
            .collect();
        Ok(Trainer {
            model,
            config: config.clone(),
            instances,
            singleton,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x51f1)),
            epoch: 0,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One pass over the shuffled instances; returns the summed loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let rate = learning_rate(self.config.learning_rate, self.config.decay, self.epoch);
        let mut order: Vec<usize> = (0..self.instances.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for i in order {
            let inst = &self.instances[i];
            let mut input = self.model.input(&inst.sentence);
            for (k, &once) in self.singleton[i].iter().enumerate() {
                if once && self.rng.gen::<f64>() < self.config.unk_prob {
                    input.words[k + 1] = 0;
                }
            }
            let dropout = (self.config.dropout > 0.0).then(|| (self.config.dropout, self.rng.gen()));
            let (loss, mut grads) = sentence_loss(&self.model, inst, input, dropout)?;
            total += loss;
            if let Some(c) = self.config.clip {
                clip(&mut grads, c);
            }
            self.model.params.sgd_step(&grads, rate);
        }
        self.epoch += 1;
        Ok(total)
    }

    pub fn transition_accuracy(&self) -> Result<f64> {
        transition_accuracy(&self.model, &self.instances)
    }
}

/// Training sentences with syntax replaced by `syntax`'s projective
/// predictions.
pub fn with_predicted_syntax(syntax: &ParserModel, corpus: &[Sentence]) -> Result<Vec<Sentence>> {
    crate::par::map(corpus, |s| {
        let (raw, _) = parse_raw(syntax, s)?;
        let mut out = s.clone();
        out.syn_arcs = raw.syn_arcs;
        Ok(out)
    })
    .into_iter()
    .collect()
}

fn fit(
    model: ParserModel,
    corpus: &[Sentence],
    dev: Option<&[Sentence]>,
    config: &TrainConfig,
    log: &mut dyn FnMut(&EpochRecord),
) -> Result<ParserModel> {
    let mode = model.mode;
    let mut trainer = Trainer::new(model, corpus, config)?;
    let mut best: Option<(f64, ParserModel)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let rate = learning_rate(config.learning_rate, config.decay, epoch);
        let loss = trainer.run_epoch()?;
        let train_accuracy = trainer.transition_accuracy()?;
        let metrics = match dev {
            Some(d) => {
                let parsed = parse_corpus(&trainer.model, d)?;
                let pred: Vec<Sentence> = parsed.into_iter().map(|p| p.sentence).collect();
                Some(evaluate(d, &pred)?)
            }
            None => None,
        };
        log(&EpochRecord {
            stage: mode,
            epoch,
            loss,
            learning_rate: rate,
            train_accuracy,
            dev: metrics,
        });
        if let Some(m) = metrics {
            let score = dev_score(&m, mode);
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, trainer.model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok(best.map_or(trainer.model, |(_, m)| m))
}

/// Trains a parser for `config.mode`. Hybrid mode first trains a
/// syntax-only model, then trains the semantic side on its predictions.
pub fn train(
    corpus: &[Sentence],
    dev: Option<&[Sentence]>,
    pretrained: EmbeddingTable,
    config: &TrainConfig,
    log: &mut dyn FnMut(&EpochRecord),
) -> Result<ParserModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    match config.mode {
        Mode::Hybrid => {
            let syn_config = TrainConfig {
                mode: Mode::SyntaxOnly,
                ..config.clone()
            };
            let syntax = train(corpus, dev, pretrained.clone(), &syn_config, log)?;
            let predicted = with_predicted_syntax(&syntax, corpus)?;
            let mut model = ParserModel::build(corpus, pretrained, config.hyper.clone(), Mode::Hybrid, config.seed);
            model.syntax = Some(Box::new(syntax));
            fit(model, &predicted, dev, config, log)
        }
        mode => {
            let model = ParserModel::build(corpus, pretrained, config.hyper.clone(), mode, config.seed);
            fit(model, corpus, dev, config, log)
        }
    }
}
