//! Stack LSTM: an LSTM whose state history is a tree of pushes, with a
//! pointer that pop moves back to the parent state.

use rand::Rng;

use super::lstm::{lstm_step, LstmLayer, LstmState};
use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Parameters of a multi-layer stack LSTM, including the learned initial
/// cell and hidden state of each layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackLstmParams {
    pub layers: Vec<LstmLayer>,
    pub c0: Vec<ParamId>,
    pub h0: Vec<ParamId>,
}

impl StackLstmParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        depth: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(depth);
        let mut c0 = Vec::with_capacity(depth);
        let mut h0 = Vec::with_capacity(depth);
        for l in 0..depth {
            let inp = if l == 0 { input } else { hidden };
            layers.push(LstmLayer::new(store, &format!("{name}.{l}"), inp, hidden, rng));
            c0.push(store.add(&format!("{name}.{l}.c0"), Tensor::zeros(hidden, 1), false));
            h0.push(store.add(&format!("{name}.{l}.h0"), Tensor::zeros(hidden, 1), false));
        }
        StackLstmParams { layers, c0, h0 }
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }
}

#[derive(Clone, Debug)]
struct Entry {
    parent: usize,
    states: Vec<LstmState>,
}

/// Runtime state of one stack LSTM on one tape.
#[derive(Clone, Debug)]
pub struct StackLstm {
    params: StackLstmParams,
    entries: Vec<Entry>,
    pointer: usize,
}

impl StackLstm {
    /// A fresh stack whose sentinel holds the learned initial states.
    pub fn new(tape: &mut Tape<'_>, params: &StackLstmParams) -> Self {
        let states = params
            .c0
            .iter()
            .zip(&params.h0)
            .map(|(&c, &h)| LstmState {
                c: tape.param(c),
                h: tape.param(h),
            })
            .collect();
        StackLstm {
            params: params.clone(),
            entries: vec![Entry { parent: 0, states }],
            pointer: 0,
        }
    }

    pub fn push(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<()> {
        let prev = &self.entries[self.pointer].states;
        let mut states = Vec::with_capacity(prev.len());
        let mut input = x;
        for (layer, &p) in self.params.layers.iter().zip(prev) {
            let s = lstm_step(tape, layer, input, p)?;
            input = s.h;
            states.push(s);
        }
        self.entries.push(Entry {
            parent: self.pointer,
            states,
        });
        self.pointer = self.entries.len() - 1;
        Ok(())
    }

    pub fn pop(&mut self) -> Result<()> {
        if self.pointer == 0 {
            return Err(Error::EmptyStack);
        }
        self.pointer = self.entries[self.pointer].parent;
        Ok(())
    }

    /// Top-layer hidden state at the stack pointer.
    pub fn query(&self) -> Var {
        self.entries[self.pointer]
            .states
            .last()
            .expect("at least one layer")
            .h
    }

    /// Number of items currently on the stack.
    pub fn depth(&self) -> usize {
        let mut d = 0;
        let mut p = self.pointer;
        while p != 0 {
            p = self.entries[p].parent;
            d += 1;
        }
        d
    }

    /// All states ever computed, including popped ones.
    pub fn history_len(&self) -> usize {
        self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::gradcheck::check_gradients;

    fn setup(seed: u64) -> (ParamStore, StackLstmParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = StackLstmParams::new(&mut store, "s", 3, 4, 2, &mut rng);
        for &id in p.c0.iter().chain(&p.h0) {
            store.get_mut(id).data.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        }
        (store, p)
    }

    #[test]
    fn fresh_stack_queries_learned_initial_state() {
        let (store, p) = setup(0);
        let mut tape = Tape::new(&store);
        let s = StackLstm::new(&mut tape, &p);
        assert_eq!(tape.value(s.query()), store.get(p.h0[1]).data.as_slice());
        assert_eq!(s.depth(), 0);
    }

    #[test]
    fn pop_restores_summary_exactly() {
        let (store, p) = setup(1);
        let mut tape = Tape::new(&store);
        let mut s = StackLstm::new(&mut tape, &p);
        let a = tape.constant(vec![0.1, 0.2, 0.3]);
        let b = tape.constant(vec![-0.4, 0.5, 0.6]);
        s.push(&mut tape, a).unwrap();
        let after_a = tape.value(s.query()).to_vec();
        s.push(&mut tape, b).unwrap();
        assert_ne!(tape.value(s.query()), after_a.as_slice());
        s.pop().unwrap();
        assert_eq!(tape.value(s.query()), after_a.as_slice());
        s.pop().unwrap();
        assert!(matches!(s.pop(), Err(Error::EmptyStack)));
    }

    #[test]
    fn matches_recompute_over_survivors() {
        let (store, p) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new(&store);
        let xs: Vec<Var> = (0..6)
            .map(|_| tape.constant((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        let mut s = StackLstm::new(&mut tape, &p);
        for &x in &xs[..5] {
            s.push(&mut tape, x).unwrap();
        }
        s.pop().unwrap();
        s.pop().unwrap();
        s.push(&mut tape, xs[5]).unwrap();
        let mut fresh = StackLstm::new(&mut tape, &p);
        for &x in [xs[0], xs[1], xs[2], xs[5]].iter() {
            fresh.push(&mut tape, x).unwrap();
        }
        assert_eq!(tape.value(s.query()), tape.value(fresh.query()));
        assert_eq!(s.depth(), 4);
        assert_eq!(s.history_len(), 7);
    }

    #[test]
    fn gradient_through_query_path() {
        for seed in 0..20 {
            let (mut store, p) = setup(100 + seed);
            let report = check_gradients(&mut store, |tape| {
                let mut s = StackLstm::new(tape, &p);
                let a = tape.constant(vec![0.3, -0.7, 0.2]);
                let b = tape.constant(vec![-0.1, 0.4, 0.9]);
                s.push(tape, a).unwrap();
                s.push(tape, b).unwrap();
                s.pop().unwrap();
                s.push(tape, b).unwrap();
                let q = s.query();
                tape.neg_log_softmax(q, 2)
            });
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }
}
