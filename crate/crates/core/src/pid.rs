//! Predicate identification for inputs without predicate marks: a
//! bidirectional LSTM over lemma and POS embeddings with an independent
//! logistic decision per token.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::nn::lstm::{lstm_step, LstmLayer, LstmState};
use crate::nn::model::{Vocab, UNK};
use crate::nn::tape::{Gradients, ParamId, ParamStore, Tape, Tensor, Var};
use crate::trainer::{clip, learning_rate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub hidden: usize,
    /// Tokens whose predicate probability exceeds this are predicates.
    pub threshold: f64,
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub dropout: f64,
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for PidConfig {
    fn default() -> Self {
        PidConfig {
            lemma_dim: 32,
            pos_dim: 12,
            hidden: 100,
            threshold: 0.5,
            epochs: 30,
            patience: 5,
            learning_rate: 0.1,
            decay: 0.1,
            dropout: 0.2,
            clip: None,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PidIds {
    pub lemma: ParamId,
    pub pos: ParamId,
    pub forward: LstmLayer,
    pub backward: LstmLayer,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl PidIds {
    pub(crate) fn declare<R: Rng>(
        store: &mut ParamStore,
        lemmas: usize,
        tags: usize,
        lemma_dim: usize,
        pos_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let lemma = store.add("pid.emb.lemma", Tensor::glorot(lemmas, lemma_dim, rng), true);
        let pos = store.add("pid.emb.pos", Tensor::glorot(tags, pos_dim, rng), true);
        let input = lemma_dim + pos_dim;
        let forward = LstmLayer::new(store, "pid.fwd", input, hidden, rng);
        let backward = LstmLayer::new(store, "pid.bwd", input, hidden, rng);
        let out_w = store.add("pid.out.w", Tensor::glorot(1, 2 * hidden, rng), false);
        let out_b = store.add("pid.out.b", Tensor::zeros(1, 1), false);
        PidIds {
            lemma,
            pos,
            forward,
            backward,
            out_w,
            out_b,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PidModel {
    pub lemma_dim: usize,
    pub pos_dim: usize,
    pub hidden: usize,
    pub threshold: f64,
    pub lemmas: Vocab,
    pub pos: Vocab,
    pub params: ParamStore,
    pub ids: PidIds,
}

impl PidModel {
    pub fn build(corpus: &[Sentence], config: &PidConfig) -> Self {
        let mut lemmas = BTreeSet::new();
        let mut tags = BTreeSet::new();
        for t in corpus.iter().flat_map(|s| &s.tokens) {
            lemmas.insert(t.lemma.clone());
            tags.insert(t.pos.clone());
        }
        let lemmas = Vocab::from_items(std::iter::once(UNK.to_owned()).chain(lemmas));
        let pos = Vocab::from_items(std::iter::once(UNK.to_owned()).chain(tags));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::assemble(config.lemma_dim, config.pos_dim, config.hidden, config.threshold, lemmas, pos, &mut rng)
    }

    pub(crate) fn assemble<R: Rng>(
        lemma_dim: usize,
        pos_dim: usize,
        hidden: usize,
        threshold: f64,
        lemmas: Vocab,
        pos: Vocab,
        rng: &mut R,
    ) -> Self {
        let mut params = ParamStore::new();
        let ids = PidIds::declare(&mut params, lemmas.len(), pos.len(), lemma_dim, pos_dim, hidden, rng);
        PidModel {
            lemma_dim,
            pos_dim,
            hidden,
            threshold,
            lemmas,
            pos,
            params,
            ids,
        }
    }

    fn features(&self, sentence: &Sentence) -> Vec<(usize, usize)> {
        sentence
            .tokens
            .iter()
            .map(|t| (self.lemmas.get(&t.lemma).unwrap_or(0), self.pos.get(&t.pos).unwrap_or(0)))
            .collect()
    }

    /// One logit per token.
    fn logits<R: Rng>(&self, tape: &mut Tape<'_>, features: &[(usize, usize)], dropout: Option<(f64, &mut R)>) -> Vec<Var> {
        let ids = &self.ids;
        let mut drop_rng = dropout;
        let mut inputs = Vec::with_capacity(features.len());
        for &(l, p) in features {
            let lv = tape.lookup(ids.lemma, l);
            let pv = tape.lookup(ids.pos, p);
            let x = tape.concat(&[lv, pv]);
            let x = match &mut drop_rng {
                Some((rate, rng)) => tape.dropout(x, *rate, &mut **rng),
                None => x,
            };
            inputs.push(x);
        }
        let zero = |tape: &mut Tape<'_>| {
            let c = tape.constant(vec![0.0; self.hidden]);
            let h = tape.constant(vec![0.0; self.hidden]);
            LstmState { c, h }
        };
        let run = |tape: &mut Tape<'_>, layer: &LstmLayer, order: &mut dyn Iterator<Item = usize>| {
            let mut out = vec![None; features.len()];
            let mut s = zero(tape);
            for i in order {
                s = lstm_step(tape, layer, inputs[i], s).expect("fixed dimensions");
                out[i] = Some(s.h);
            }
            out
        };
        let fwd = run(tape, &ids.forward, &mut (0..features.len()));
        let bwd = run(tape, &ids.backward, &mut (0..features.len()).rev());
        fwd.into_iter()
            .zip(bwd)
            .map(|(f, b)| {
                let both = tape.concat(&[f.expect("visited"), b.expect("visited")]);
                tape.affine(ids.out_w, ids.out_b, both).expect("fixed dimensions")
            })
            .collect()
    }

    /// Predicate probability of every token.
    pub fn probabilities(&self, sentence: &Sentence) -> Vec<f64> {
        let mut tape = Tape::new(&self.params);
        let logits = self.logits::<ChaCha8Rng>(&mut tape, &self.features(sentence), None);
        logits
            .into_iter()
            .map(|z| {
                let z = tape.scalar(z);
                1.0 / (1.0 + (-z).exp())
            })
            .collect()
    }

    /// Summed binary log-loss over the tokens of `sentence` and its
    /// gradients.
    pub fn loss(&self, sentence: &Sentence, dropout: Option<(f64, &mut ChaCha8Rng)>) -> (f64, Gradients) {
        let mut tape = Tape::new(&self.params);
        let logits = self.logits(&mut tape, &self.features(sentence), dropout);
        let losses: Vec<Var> = logits
            .iter()
            .zip(&sentence.tokens)
            .map(|(&z, t)| tape.logistic_loss(z, t.is_predicate))
            .collect();
        let total = tape.sum(&losses);
        (tape.scalar(total), tape.backward(total))
    }
}

/// 1-based indices of the tokens the classifier marks as predicates.
pub fn identify_predicates(sentence: &Sentence, model: &PidModel) -> BTreeSet<usize> {
    model
        .probabilities(sentence)
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > model.threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Copies of `corpus` whose predicate marks come from the classifier. Senses
/// are dropped; the parser assigns them.
pub fn mark_predicates(corpus: &[Sentence], model: &PidModel) -> Vec<Sentence> {
    crate::par::map(corpus, |s| {
        let preds = identify_predicates(s, model);
        let mut out = s.clone();
        for t in &mut out.tokens {
            t.is_predicate = preds.contains(&t.index);
            t.sense = None;
        }
        out
    })
}

/// Token-level accuracy and predicate F1 of the classifier on `corpus`.
pub fn pid_scores(corpus: &[Sentence], model: &PidModel) -> (f64, f64) {
    let (mut correct, mut total, mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for s in corpus {
        let preds = identify_predicates(s, model);
        for t in &s.tokens {
            let p = preds.contains(&t.index);
            total += 1;
            correct += usize::from(p == t.is_predicate);
            match (p, t.is_predicate) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fnn += 1,
                _ => {}
            }
        }
    }
    let acc = if total == 0 { 1.0 } else { correct as f64 / total as f64 };
    let f1 = if tp + fp + fnn == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
    };
    (acc, f1)
}

#[derive(Clone, Debug, Serialize)]
pub struct PidEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
    pub train_accuracy: f64,
    pub dev_f1: Option<f64>,
}

/// Per-sentence SGD on the summed token log-loss, with early stopping on
/// dev F1 when `dev` is given.
pub fn train_pid(
    train: &[Sentence],
    dev: Option<&[Sentence]>,
    config: &PidConfig,
    mut log: impl FnMut(&PidEpoch),
) -> Result<PidModel> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = PidModel::build(train, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let rate = learning_rate(config.learning_rate, config.decay, epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, mut grads) = model.loss(&train[i], Some((config.dropout, &mut rng)));
            total += loss;
            if let Some(c) = config.clip {
                clip(&mut grads, c);
            }
            model.params.sgd_step(&grads, rate);
        }
        let (train_accuracy, _) = pid_scores(train, &model);
        let dev_f1 = dev.map(|d| pid_scores(d, &model).1);
        log(&PidEpoch {
            epoch,
            loss: total,
            learning_rate: rate,
            train_accuracy,
            dev_f1,
        });
        if let Some(f1) = dev_f1 {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::nn::gradcheck::check_gradients;

    fn sentence(words: &[(&str, &str, bool)]) -> Sentence {
        Sentence::new(
            words
                .iter()
                .enumerate()
                .map(|(i, &(l, p, pred))| {
                    let t = Token::new(i + 1, l, l, p);
                    if pred {
                        t.with_sense(&format!("{l}.01"))
                    } else {
                        t
                    }
                })
                .collect(),
        )
    }

    fn small_config() -> PidConfig {
        PidConfig {
            lemma_dim: 5,
            pos_dim: 3,
            hidden: 6,
            ..PidConfig::default()
        }
    }

    #[test]
    fn zero_weights_mark_nothing() {
        let s = sentence(&[("a", "DT", false), ("run", "VB", true)]);
        let mut m = PidModel::build(&[s.clone()], &small_config());
        m.params.get_mut(m.ids.out_w).data.iter_mut().for_each(|x| *x = 0.0);
        assert_eq!(m.probabilities(&s), vec![0.5, 0.5]);
        assert!(identify_predicates(&s, &m).is_empty());
        let (loss, _) = m.loss(&s, None);
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let s = sentence(&[("a", "DT", false), ("run", "VB", true), ("fast", "RB", false)]);
        for seed in 0..20 {
            let config = PidConfig { seed, ..small_config() };
            let mut m = PidModel::build(&[s.clone()], &config);
            let features = m.features(&s);
            let view = m.clone();
            let report = check_gradients(&mut m.params, |tape| {
                let logits = view.logits::<ChaCha8Rng>(tape, &features, None);
                let losses: Vec<Var> = logits
                    .iter()
                    .zip(&s.tokens)
                    .map(|(&z, t)| tape.logistic_loss(z, t.is_predicate))
                    .collect();
                tape.sum(&losses)
            });
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn descent_on_one_example() {
        let s = sentence(&[("a", "DT", false), ("run", "VB", true)]);
        let mut m = PidModel::build(&[s.clone()], &small_config());
        let (before, grads) = m.loss(&s, None);
        m.params.sgd_step(&grads, 1e-3);
        let (after, _) = m.loss(&s, None);
        assert!(after < before);
    }

    #[test]
    fn overfits_ten_sentences() {
        let verbs = ["run", "eat", "see", "take", "make"];
        let nouns = ["dog", "cat", "idea", "car", "tree"];
        let corpus: Vec<Sentence> = (0..10)
            .map(|i| {
                sentence(&[
                    ("the", "DT", false),
                    (nouns[i % 5], "NN", false),
                    (verbs[(i * 3) % 5], "VBZ", true),
                    (nouns[(i + 2) % 5], "NN", nouns[(i + 2) % 5] == "idea"),
                ])
            })
            .collect();
        let config = PidConfig {
            epochs: 50,
            dropout: 0.0,
            ..small_config()
        };
        let mut last = 0.0;
        let m = train_pid(&corpus, None, &config, |e| last = e.train_accuracy).unwrap();
        assert_eq!(pid_scores(&corpus, &m).0, 1.0, "last accuracy {last}");
    }
}
