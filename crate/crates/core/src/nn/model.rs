//! Parser parameters, vocabularies and the neural state encoder.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stack_lstm::{StackLstm, StackLstmParams};
use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::corpus::{EmbeddingTable, Sentence, ROOT};
use crate::error::{Error, Result};
use crate::oracle::projectivize;
use crate::state::{Mode, ParserState, Representation, StackId};
use crate::transition::{Transition, TransitionKind};

pub const UNK: &str = "<unk>";

/// Layer sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub label_dim: usize,
    pub role_dim: usize,
    pub sense_dim: usize,
    pub action_dim: usize,
    /// Dimension of token and fragment vectors on the stacks.
    pub token_dim: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub state_dim: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            word_dim: 32,
            pos_dim: 12,
            label_dim: 20,
            role_dim: 20,
            sense_dim: 100,
            action_dim: 100,
            token_dim: 100,
            lstm_hidden: 100,
            lstm_layers: 2,
            state_dim: 100,
        }
    }
}

impl Hyper {
    /// Small sizes for tests and fuzzing.
    pub fn tiny() -> Self {
        Hyper {
            word_dim: 6,
            pos_dim: 4,
            label_dim: 4,
            role_dim: 4,
            sense_dim: 4,
            action_dim: 6,
            token_dim: 8,
            lstm_hidden: 8,
            lstm_layers: 1,
            state_dim: 8,
        }
    }

    pub(crate) fn pairs(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("label_dim", self.label_dim),
            ("role_dim", self.role_dim),
            ("sense_dim", self.sense_dim),
            ("action_dim", self.action_dim),
            ("token_dim", self.token_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("state_dim", self.state_dim),
        ]
    }

    pub(crate) fn from_pairs(pairs: &HashMap<String, usize>) -> Result<Self> {
        let get = |k: &str| {
            pairs
                .get(k)
                .copied()
                .ok_or_else(|| Error::ModelFormat(format!("missing hyperparameter {k}")))
        };
        Ok(Hyper {
            word_dim: get("word_dim")?,
            pos_dim: get("pos_dim")?,
            label_dim: get("label_dim")?,
            role_dim: get("role_dim")?,
            sense_dim: get("sense_dim")?,
            action_dim: get("action_dim")?,
            token_dim: get("token_dim")?,
            lstm_hidden: get("lstm_hidden")?,
            lstm_layers: get("lstm_layers")?,
            state_dim: get("state_dim")?,
        })
    }
}

/// Insertion-ordered string table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::new();
        for s in items {
            v.add(s.into());
        }
        v
    }

    pub fn add(&mut self, s: String) -> usize {
        if let Some(&i) = self.index.get(&s) {
            return i;
        }
        self.index.insert(s.clone(), self.items.len());
        self.items.push(s);
        self.items.len() - 1
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Every concrete transition the model can score, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionVocab {
    actions: Vec<Transition>,
    index: HashMap<Transition, usize>,
    ranges: BTreeMap<TransitionKind, (usize, usize)>,
}

impl ActionVocab {
    pub fn new(actions: impl IntoIterator<Item = Transition>) -> Self {
        let actions: Vec<Transition> = actions.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = actions.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let mut ranges = BTreeMap::new();
        for (i, t) in actions.iter().enumerate() {
            ranges.entry(t.kind()).or_insert((i, i)).1 = i + 1;
        }
        ActionVocab { actions, index, ranges }
    }

    /// Parameterless kinds plus every label, role and sense combination.
    pub fn full(labels: &Vocab, roles: &Vocab, senses: &Vocab) -> Self {
        use Transition::*;
        let mut all = vec![SShift, SReduce, MShift, MReduce, MSwap];
        for l in labels.items() {
            all.push(SLeft(l.clone()));
            all.push(SRight(l.clone()));
        }
        for r in roles.items() {
            all.push(MLeft(r.clone()));
            all.push(MRight(r.clone()));
            all.push(MSelf(r.clone()));
        }
        for s in senses.items() {
            all.push(MPred(s.clone()));
        }
        Self::new(all)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, t: &Transition) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn action(&self, i: usize) -> &Transition {
        &self.actions[i]
    }

    pub fn actions(&self) -> &[Transition] {
        &self.actions
    }

    pub fn range(&self, kind: TransitionKind) -> std::ops::Range<usize> {
        self.ranges.get(&kind).map_or(0..0, |&(a, b)| a..b)
    }
}

/// Parameter handles in declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamIds {
    pub word: ParamId,
    pub pos: ParamId,
    pub label: ParamId,
    pub role: ParamId,
    pub sense: ParamId,
    pub action: ParamId,
    pub tok_w: ParamId,
    pub tok_b: ParamId,
    pub root: ParamId,
    pub z_s: ParamId,
    pub e_s: ParamId,
    pub z_m: ParamId,
    pub e_m: ParamId,
    pub z_d: ParamId,
    pub e_d: ParamId,
    pub stacks: [StackLstmParams; 4],
    pub sum_w: ParamId,
    pub sum_d: ParamId,
    pub theta: ParamId,
    pub q: ParamId,
}

/// Vocabulary sizes that fix the parameter shapes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Sizes {
    pub words: usize,
    pub pos: usize,
    pub labels: usize,
    pub roles: usize,
    pub senses: usize,
    pub actions: usize,
    pub pretrained: usize,
}

impl ParamIds {
    pub(crate) fn declare<R: Rng>(store: &mut ParamStore, h: &Hyper, s: Sizes, rng: &mut R) -> Self {
        let emb = |store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut R| {
            store.add(name, Tensor::glorot(rows, cols, rng), true)
        };
        // embedding tables carry one extra row for unknown symbols
        let word = emb(store, "emb.word", s.words, h.word_dim, rng);
        let pos = emb(store, "emb.pos", s.pos, h.pos_dim, rng);
        let label = emb(store, "emb.label", s.labels + 1, h.label_dim, rng);
        let role = emb(store, "emb.role", s.roles + 1, h.role_dim, rng);
        let sense = emb(store, "emb.sense", s.senses + 1, h.sense_dim, rng);
        let action = emb(store, "emb.action", s.actions + 1, h.action_dim, rng);
        let dense = |store: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut R| {
            store.add(name, Tensor::glorot(rows, cols, rng), false)
        };
        let d = h.token_dim;
        let tok_w = dense(store, "token.w", d, s.pretrained + h.word_dim + h.pos_dim, rng);
        let tok_b = store.add("token.b", Tensor::zeros(d, 1), false);
        let root = dense(store, "root", d, 1, rng);
        let z_s = dense(store, "compose.syn.z", d, 2 * d + h.label_dim, rng);
        let e_s = store.add("compose.syn.e", Tensor::zeros(d, 1), false);
        let z_m = dense(store, "compose.sem.z", d, 2 * d + h.role_dim, rng);
        let e_m = store.add("compose.sem.e", Tensor::zeros(d, 1), false);
        let z_d = dense(store, "compose.pred.z", d, d + h.sense_dim, rng);
        let e_d = store.add("compose.pred.e", Tensor::zeros(d, 1), false);
        let stack = |store: &mut ParamStore, name: &str, input: usize, rng: &mut R| {
            StackLstmParams::new(store, name, input, h.lstm_hidden, h.lstm_layers, rng)
        };
        let stacks = [
            stack(store, "stack.s", d, rng),
            stack(store, "stack.m", d, rng),
            stack(store, "stack.b", d, rng),
            stack(store, "stack.a", h.action_dim, rng),
        ];
        let sum_w = store.add("state.w", Tensor::glorot(h.state_dim, 4 * h.lstm_hidden, rng), false);
        let sum_d = store.add("state.d", Tensor::zeros(h.state_dim, 1), false);
        let theta = store.add("score.theta", Tensor::glorot(s.actions, h.state_dim, rng), true);
        let q = store.add("score.q", Tensor::zeros(s.actions, 1), true);
        ParamIds {
            word,
            pos,
            label,
            role,
            sense,
            action,
            tok_w,
            tok_b,
            root,
            z_s,
            e_s,
            z_m,
            e_m,
            z_d,
            e_d,
            stacks,
            sum_w,
            sum_d,
            theta,
            q,
        }
    }
}

/// `tanh(z [parts] + e)`: the shared form of the three composition functions.
pub fn compose(tape: &mut Tape<'_>, z: ParamId, e: ParamId, parts: &[Var]) -> Result<Var> {
    let x = tape.concat(parts);
    let a = tape.affine(z, e, x)?;
    Ok(tape.tanh(a))
}

/// `max(0, d + w [parts])`.
pub fn summarize_state(tape: &mut Tape<'_>, w: ParamId, d: ParamId, parts: &[Var]) -> Result<Var> {
    let x = tape.concat(parts);
    let a = tape.affine(w, d, x)?;
    Ok(tape.relu(a))
}

/// `q_r + theta_r . y` for each candidate row `r`.
pub fn score_transitions(tape: &mut Tape<'_>, theta: ParamId, q: ParamId, y: Var, rows: &[usize]) -> Result<Var> {
    if rows.is_empty() {
        return Err(Error::EmptyAllowed);
    }
    tape.scores(theta, q, rows, y)
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-token inputs of one sentence; index 0 is the root and unused.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceInput {
    pub words: Vec<usize>,
    pub pos: Vec<usize>,
    pub pretrained: Vec<Vec<f64>>,
    pub lemmas: Vec<String>,
}

/// All learned and fixed parameters of one parser.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    pub mode: Mode,
    pub hyper: Hyper,
    pub words: Vocab,
    pub pos: Vocab,
    pub labels: Vocab,
    pub roles: Vocab,
    pub senses: Vocab,
    pub actions: ActionVocab,
    /// Senses observed with each lemma.
    pub lemma_senses: BTreeMap<String, Vec<String>>,
    pub pretrained: EmbeddingTable,
    pub params: ParamStore,
    pub ids: ParamIds,
    /// The syntax-only model that supplies syntax to a hybrid model.
    pub syntax: Option<Box<ParserModel>>,
}

impl ParserModel {
    /// Builds vocabularies from `corpus` and initializes parameters from
    /// `seed`.
    pub fn build(corpus: &[Sentence], pretrained: EmbeddingTable, hyper: Hyper, mode: Mode, seed: u64) -> Self {
        let mut forms = BTreeSet::new();
        let mut tags = BTreeSet::new();
        let mut labels = BTreeSet::new();
        let mut roles = BTreeSet::new();
        let mut senses = BTreeSet::new();
        let mut lemma_senses: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for s in corpus {
            for t in &s.tokens {
                forms.insert(t.form.clone());
                tags.insert(t.pos.clone());
                if let Some(sense) = &t.sense {
                    senses.insert(sense.clone());
                    lemma_senses.entry(t.lemma.clone()).or_default().insert(sense.clone());
                }
            }
            for a in &projectivize(s).0.syn_arcs {
                labels.insert(a.label.clone());
            }
            for a in &s.sem_arcs {
                roles.insert(a.role.clone());
            }
        }
        let words = Vocab::from_items(std::iter::once(UNK.to_owned()).chain(forms));
        let pos = Vocab::from_items(std::iter::once(UNK.to_owned()).chain(tags));
        let labels = Vocab::from_items(labels);
        let roles = Vocab::from_items(roles);
        let senses = Vocab::from_items(senses);
        let lemma_senses = lemma_senses
            .into_iter()
            .map(|(l, s)| (l, s.into_iter().collect()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::assemble(mode, hyper, words, pos, labels, roles, senses, lemma_senses, pretrained, &mut rng)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble<R: Rng>(
        mode: Mode,
        hyper: Hyper,
        words: Vocab,
        pos: Vocab,
        labels: Vocab,
        roles: Vocab,
        senses: Vocab,
        lemma_senses: BTreeMap<String, Vec<String>>,
        pretrained: EmbeddingTable,
        rng: &mut R,
    ) -> Self {
        let actions = ActionVocab::full(&labels, &roles, &senses);
        let sizes = Sizes {
            words: words.len(),
            pos: pos.len(),
            labels: labels.len(),
            roles: roles.len(),
            senses: senses.len(),
            actions: actions.len(),
            pretrained: pretrained.dimension(),
        };
        let mut params = ParamStore::new();
        let ids = ParamIds::declare(&mut params, &hyper, sizes, rng);
        ParserModel {
            mode,
            hyper,
            words,
            pos,
            labels,
            roles,
            senses,
            actions,
            lemma_senses,
            pretrained,
            params,
            ids,
            syntax: None,
        }
    }

    /// Feature ids for a sentence; unknown forms and tags map to `<unk>`.
    pub fn input(&self, sentence: &Sentence) -> SentenceInput {
        let n = sentence.len();
        let mut input = SentenceInput {
            words: vec![0; n + 1],
            pos: vec![0; n + 1],
            pretrained: vec![Vec::new(); n + 1],
            lemmas: vec![String::new(); n + 1],
        };
        for t in &sentence.tokens {
            input.words[t.index] = self.words.get(&t.form).unwrap_or(0);
            input.pos[t.index] = self.pos.get(&t.pos).unwrap_or(0);
            if self.pretrained.dimension() > 0 {
                input.pretrained[t.index] = self.pretrained.lookup(&t.form).to_vec();
            }
            input.lemmas[t.index] = t.lemma.clone();
        }
        input
    }

    /// Concrete actions of the allowed kinds, ascending. M-Pred is limited
    /// to the senses seen with `lemma`, or every sense for unseen lemmas.
    pub fn candidates(&self, kinds: &[TransitionKind], lemma: Option<&str>) -> Vec<usize> {
        let mut out = Vec::new();
        for &k in kinds {
            if k == TransitionKind::MPred {
                if let Some(known) = lemma.and_then(|l| self.lemma_senses.get(l)) {
                    out.extend(
                        known
                            .iter()
                            .filter_map(|s| self.actions.get(&Transition::MPred(s.clone()))),
                    );
                    continue;
                }
            }
            out.extend(self.actions.range(k));
        }
        out.sort_unstable();
        out
    }
}

/// Vector side of a parser state: the four stack LSTMs on one tape.
pub struct Encoder<'m> {
    model: &'m ParserModel,
    pub tape: Tape<'m>,
    stacks: [StackLstm; 4],
    input: SentenceInput,
    dropout: Option<(f64, ChaCha8Rng)>,
}

fn stack_index(id: StackId) -> usize {
    match id {
        StackId::Syntactic => 0,
        StackId::Semantic => 1,
        StackId::Buffer => 2,
        StackId::Actions => 3,
    }
}

impl<'m> Encoder<'m> {
    /// `dropout` is `(rate, seed)` at training time and `None` otherwise.
    pub fn new(model: &'m ParserModel, input: SentenceInput, dropout: Option<(f64, u64)>) -> Self {
        let mut tape = Tape::new(&model.params);
        let stacks = [0, 1, 2, 3].map(|i| StackLstm::new(&mut tape, &model.ids.stacks[i]));
        Encoder {
            model,
            tape,
            stacks,
            input,
            dropout: dropout.map(|(p, seed)| (p, ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    pub fn model(&self) -> &'m ParserModel {
        self.model
    }

    pub fn lemma(&self, token: usize) -> Option<&str> {
        (token != ROOT).then(|| self.input.lemmas[token].as_str())
    }

    fn drop(&mut self, v: Var) -> Var {
        match &mut self.dropout {
            Some((p, rng)) => self.tape.dropout(v, *p, rng),
            None => v,
        }
    }

    /// The parser state vector `y`.
    pub fn summarize(&mut self) -> Var {
        let parts: Vec<Var> = self.stacks.iter().map(|s| s.query()).collect();
        let x = self.tape.concat(&parts);
        let x = self.drop(x);
        let ids = &self.model.ids;
        summarize_state(&mut self.tape, ids.sum_w, ids.sum_d, &[x]).expect("state dimensions fixed at build")
    }

    pub fn scores(&mut self, y: Var, candidates: &[usize]) -> Result<Var> {
        let ids = &self.model.ids;
        score_transitions(&mut self.tape, ids.theta, ids.q, y, candidates)
    }

    /// Allowed concrete actions in `state`.
    pub fn candidates<R>(&self, state: &ParserState<R>) -> Result<Vec<usize>>
    where
        R: Clone,
    {
        let kinds = state.allowed()?;
        let lemma = state.front().and_then(|f| self.lemma(f));
        Ok(self.model.candidates(&kinds, lemma))
    }
}

impl Representation for Encoder<'_> {
    type Repr = Var;

    fn atom(&mut self, token: usize) -> Var {
        let ids = &self.model.ids;
        if token == ROOT {
            return self.tape.param(ids.root);
        }
        let mut parts = Vec::with_capacity(3);
        if self.model.pretrained.dimension() > 0 {
            parts.push(self.tape.constant(self.input.pretrained[token].clone()));
        }
        parts.push(self.tape.lookup(ids.word, self.input.words[token]));
        parts.push(self.tape.lookup(ids.pos, self.input.pos[token]));
        compose(&mut self.tape, ids.tok_w, ids.tok_b, &parts).expect("token dimensions fixed at build")
    }

    fn compose_syn(&mut self, head: &Var, dep: &Var, label: &str) -> Var {
        let ids = &self.model.ids;
        let row = self.model.labels.get(label).unwrap_or(self.model.labels.len());
        let l = self.tape.lookup(ids.label, row);
        compose(&mut self.tape, ids.z_s, ids.e_s, &[*head, *dep, l]).expect("fixed dimensions")
    }

    fn compose_sem(&mut self, head: &Var, dep: &Var, role: &str) -> Var {
        let ids = &self.model.ids;
        let row = self.model.roles.get(role).unwrap_or(self.model.roles.len());
        let r = self.tape.lookup(ids.role, row);
        compose(&mut self.tape, ids.z_m, ids.e_m, &[*head, *dep, r]).expect("fixed dimensions")
    }

    fn compose_pred(&mut self, word: &Var, sense: &str) -> Var {
        let ids = &self.model.ids;
        let row = self.model.senses.get(sense).unwrap_or(self.model.senses.len());
        let p = self.tape.lookup(ids.sense, row);
        compose(&mut self.tape, ids.z_d, ids.e_d, &[*word, p]).expect("fixed dimensions")
    }

    fn push(&mut self, stack: StackId, item: &Var) {
        let x = self.drop(*item);
        self.stacks[stack_index(stack)]
            .push(&mut self.tape, x)
            .expect("stack input dimensions fixed at build");
    }

    fn pop(&mut self, stack: StackId) {
        self.stacks[stack_index(stack)]
            .pop()
            .expect("the transition system pops only non-empty stacks");
    }

    fn record(&mut self, transition: &Transition) {
        let row = self.model.actions.get(transition).unwrap_or(self.model.actions.len());
        let a = self.tape.lookup(self.model.ids.action, row);
        self.push(StackId::Actions, &a);
    }
}
