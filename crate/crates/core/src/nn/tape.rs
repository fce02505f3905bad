//! Reverse-mode automatic differentiation over vectors of `f64`.
//!
//! Parameters live in a [`ParamStore`] as row-major matrices. A [`Tape`]
//! records every operation of one forward pass; [`Tape::backward`] returns
//! the gradient of a scalar node with respect to every parameter it touched.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major matrix. Vectors are `rows x 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in ±sqrt(6 / (rows + cols)).
    pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Tensor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// Named parameter tensors in declaration order.
///
/// Sparse parameters (embedding tables, per-action scores) receive row-wise
/// gradients; dense ones receive a full gradient matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    sparse: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor, sparse: bool) -> ParamId {
        self.names.push(name.to_owned());
        self.tensors.push(tensor);
        self.sparse.push(sparse);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_sparse(&self, id: ParamId) -> bool {
        self.sparse[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// `param -= rate * grad` for every gradient entry.
    pub fn sgd_step(&mut self, grads: &Gradients, rate: f64) {
        for (&id, g) in &grads.entries {
            let t = &mut self.tensors[id.0];
            match g {
                Grad::Dense(g) => {
                    for (p, d) in t.data.iter_mut().zip(g) {
                        *p -= rate * d;
                    }
                }
                Grad::Rows(rows) => {
                    for (&r, g) in rows {
                        for (p, d) in t.row_mut(r).iter_mut().zip(g) {
                            *p -= rate * d;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Grad {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<ParamId, Grad>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Grad> {
        self.entries.get(&id)
    }

    /// Gradient of a single scalar entry, zero if untouched.
    pub fn at(&self, id: ParamId, row: usize, col: usize, cols: usize) -> f64 {
        match self.entries.get(&id) {
            None => 0.0,
            Some(Grad::Dense(g)) => g[row * cols + col],
            Some(Grad::Rows(rows)) => rows.get(&row).map_or(0.0, |r| r[col]),
        }
    }

    pub fn norm(&self) -> f64 {
        let mut sum = 0.0;
        for g in self.entries.values() {
            match g {
                Grad::Dense(g) => sum += g.iter().map(|x| x * x).sum::<f64>(),
                Grad::Rows(rows) => {
                    for r in rows.values() {
                        sum += r.iter().map(|x| x * x).sum::<f64>();
                    }
                }
            }
        }
        sum.sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.entries.values_mut() {
            match g {
                Grad::Dense(g) => g.iter_mut().for_each(|x| *x *= factor),
                Grad::Rows(rows) => rows
                    .values_mut()
                    .for_each(|r| r.iter_mut().for_each(|x| *x *= factor)),
            }
        }
    }

    fn dense(&mut self, id: ParamId, len: usize) -> &mut Vec<f64> {
        match self
            .entries
            .entry(id)
            .or_insert_with(|| Grad::Dense(vec![0.0; len]))
        {
            Grad::Dense(g) => g,
            Grad::Rows(_) => unreachable!("parameter used both densely and by rows"),
        }
    }

    fn row(&mut self, id: ParamId, row: usize, cols: usize) -> &mut Vec<f64> {
        match self
            .entries
            .entry(id)
            .or_insert_with(|| Grad::Rows(BTreeMap::new()))
        {
            Grad::Rows(rows) => rows.entry(row).or_insert_with(|| vec![0.0; cols]),
            Grad::Dense(_) => unreachable!("parameter used both densely and by rows"),
        }
    }

    fn accumulate_param(&mut self, store: &ParamStore, id: ParamId, g: &[f64]) {
        if store.is_sparse(id) {
            let cols = store.get(id).cols;
            for (r, chunk) in g.chunks(cols).enumerate() {
                add_into(self.row(id, r, cols), chunk);
            }
        } else {
            add_into(self.dense(id, g.len()), g);
        }
    }
}

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup(ParamId, usize),
    Affine { w: ParamId, b: ParamId, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Mask(Var, Vec<f64>),
    Sum(Vec<Var>),
    Scores { theta: ParamId, q: ParamId, rows: Vec<usize>, y: Var },
    NegLogSoftmax { x: Var, gold: usize, probs: Vec<f64> },
    Logistic { x: Var, label: bool },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// One forward computation over a fixed parameter store.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// The single entry of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    /// The whole parameter, flattened row-major.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    /// One row of a parameter matrix.
    pub fn lookup(&mut self, id: ParamId, row: usize) -> Var {
        let value = self.params.get(id).row(row).to_vec();
        self.push(value, Op::Lookup(id, row))
    }

    /// `w x + b` with `w` of shape `out x in` and `b` of shape `out x 1`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Result<Var> {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let xv = &self.nodes[x.0].value;
        check_len(wt.cols, xv.len())?;
        check_len(wt.rows, bt.data.len())?;
        let mut out = bt.data.clone();
        for (r, o) in out.iter_mut().enumerate() {
            *o += wt.row(r).iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(out, Op::Affine { w, b, x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        check_len(av.len(), bv.len())?;
        let out = av.iter().zip(bv).map(|(x, y)| x + y).collect();
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        check_len(av.len(), bv.len())?;
        let out = av.iter().zip(bv).map(|(x, y)| x * y).collect();
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| x.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// `len` entries of `a` starting at `start`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(out, Op::Slice(a, start))
    }

    /// Elementwise product with a fixed mask (used for dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        check_len(av.len(), mask.len())?;
        let out = av.iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.push(out, Op::Mask(a, mask)))
    }

    /// Inverted dropout: zero each entry with probability `p`, scale the
    /// rest by `1/(1-p)`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.nodes[a.0].value.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mask(a, mask).expect("mask built to length")
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let total = parts.iter().map(|p| self.nodes[p.0].value.iter().sum::<f64>()).sum();
        self.push(vec![total], Op::Sum(parts.to_vec()))
    }

    /// `q[r] + theta[r] . y` for each `r` in `rows`.
    pub fn scores(&mut self, theta: ParamId, q: ParamId, rows: &[usize], y: Var) -> Result<Var> {
        let tt = self.params.get(theta);
        let qt = self.params.get(q);
        let yv = &self.nodes[y.0].value;
        check_len(tt.cols, yv.len())?;
        let out = rows
            .iter()
            .map(|&r| qt.data[r] + tt.row(r).iter().zip(yv).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        Ok(self.push(
            out,
            Op::Scores {
                theta,
                q,
                rows: rows.to_vec(),
                y,
            },
        ))
    }

    /// `-log softmax(x)[gold]`, computed stably.
    pub fn neg_log_softmax(&mut self, x: Var, gold: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = -(xv[gold] - max - z.ln());
        self.push(vec![loss], Op::NegLogSoftmax { x, gold, probs })
    }

    /// Binary log-loss of the logistic of a scalar logit.
    pub fn logistic_loss(&mut self, x: Var, label: bool) -> Var {
        let z = self.nodes[x.0].value[0];
        // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
        let s = if label { -z } else { z };
        let loss = s.max(0.0) + (-s.abs()).exp().ln_1p();
        self.push(vec![loss], Op::Logistic { x, label })
    }

    /// Gradients of the scalar node `out` with respect to all parameters.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads = Gradients::default();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        adj[out.0] = Some(vec![1.0; self.nodes[out.0].value.len()]);
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, d: &[f64]| match &mut adj[v.0] {
                Some(a) => add_into(a, d),
                slot @ None => *slot = Some(d.to_vec()),
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate_param(self.params, *id, &g),
                Op::Lookup(id, row) => {
                    let cols = self.params.get(*id).cols;
                    if self.params.is_sparse(*id) {
                        add_into(grads.row(*id, *row, cols), &g);
                    } else {
                        let len = self.params.get(*id).data.len();
                        add_into(&mut grads.dense(*id, len)[row * cols..(row + 1) * cols], &g);
                    }
                }
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let xv = &self.nodes[x.0].value;
                    let gw = grads.dense(*w, wt.data.len());
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (slot, xi) in gw[r * wt.cols..(r + 1) * wt.cols].iter_mut().zip(xv) {
                                *slot += gr * xi;
                            }
                        }
                    }
                    add_into(grads.dense(*b, g.len()), &g);
                    let mut gx = vec![0.0; wt.cols];
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (slot, wi) in gx.iter_mut().zip(wt.row(r)) {
                                *slot += gr * wi;
                            }
                        }
                    }
                    send(*x, &gx);
                }
                Op::Add(a, b) => {
                    send(*a, &g);
                    send(*b, &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(g, x)| g * x).collect();
                    send(*a, &ga);
                    send(*b, &gb);
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = g.iter().zip(&node.value).map(|(g, y)| g * (1.0 - y * y)).collect();
                    send(*a, &d);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = g.iter().zip(&node.value).map(|(g, y)| g * y * (1.0 - y)).collect();
                    send(*a, &d);
                }
                Op::Relu(a) => {
                    let d: Vec<f64> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                        .collect();
                    send(*a, &d);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        send(*p, &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Slice(a, start) => {
                    let mut d = vec![0.0; self.nodes[a.0].value.len()];
                    d[*start..*start + g.len()].copy_from_slice(&g);
                    send(*a, &d);
                }
                Op::Mask(a, mask) => {
                    let d: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                    send(*a, &d);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        send(*p, &vec![g[0]; len]);
                    }
                }
                Op::Scores { theta, q, rows, y } => {
                    let tt = self.params.get(*theta);
                    let yv = &self.nodes[y.0].value;
                    let mut gy = vec![0.0; yv.len()];
                    for (&r, &gr) in rows.iter().zip(&g) {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = grads.row(*theta, r, tt.cols);
                        for (slot, yi) in row.iter_mut().zip(yv) {
                            *slot += gr * yi;
                        }
                        for (slot, ti) in gy.iter_mut().zip(tt.row(r)) {
                            *slot += gr * ti;
                        }
                        grads.row(*q, r, 1)[0] += gr;
                    }
                    send(*y, &gy);
                }
                Op::NegLogSoftmax { x, gold, probs } => {
                    let mut d: Vec<f64> = probs.iter().map(|p| g[0] * p).collect();
                    d[*gold] -= g[0];
                    send(*x, &d);
                }
                Op::Logistic { x, label } => {
                    let p = sigmoid(self.nodes[x.0].value[0]);
                    let y = if *label { 1.0 } else { 0.0 };
                    send(*x, &[g[0] * (p - y)]);
                }
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::gradcheck::check_gradients;

    #[test]
    fn affine_matches_hand_computation() {
        let mut store = ParamStore::new();
        let w = store.add(
            "w",
            Tensor {
                rows: 2,
                cols: 3,
                data: vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0],
            },
            false,
        );
        let b = store.add("b", Tensor { rows: 2, cols: 1, data: vec![0.5, -0.5] }, false);
        let mut tape = Tape::new(&store);
        let x = tape.constant(vec![1.0, 1.0, 2.0]);
        let y = tape.affine(w, b, x).unwrap();
        assert_eq!(tape.value(y), &[9.5, 0.5]);
        assert!(matches!(
            tape.affine(w, b, y),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn softmax_loss_singleton_and_uniform() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let one = tape.constant(vec![3.7]);
        let l = tape.neg_log_softmax(one, 0);
        assert_eq!(tape.scalar(l), 0.0);
        let four = tape.constant(vec![0.25; 4]);
        let l = tape.neg_log_softmax(four, 2);
        assert!((tape.scalar(l) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_loss_at_zero_is_ln2() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let z = tape.constant(vec![0.0]);
        for label in [true, false] {
            let l = tape.logistic_loss(z, label);
            assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-15);
        }
        let big = tape.constant(vec![800.0]);
        let l = tape.logistic_loss(big, false);
        assert!((tape.scalar(l) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn gradients_of_elementwise_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut store = ParamStore::new();
            let a = store.add("a", Tensor::glorot(4, 1, &mut rng), false);
            let e = store.add("e", Tensor::glorot(3, 4, &mut rng), true);
            let mask: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0)).collect();
            let report = check_gradients(&mut store, |tape| {
                let av = tape.param(a);
                let ev = tape.lookup(e, 1);
                let s = tape.add(av, ev).unwrap();
                let t = tape.tanh(s);
                let g = tape.sigmoid(av);
                let m = tape.mul(t, g).unwrap();
                let m = tape.mask(m, mask.clone()).unwrap();
                let c = tape.concat(&[m, ev]);
                let sl = tape.slice(c, 2, 5);
                tape.neg_log_softmax(sl, 1)
            });
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn sgd_updates_only_touched_rows() {
        let mut store = ParamStore::new();
        let e = store.add("e", Tensor { rows: 3, cols: 2, data: vec![1.0; 6] }, true);
        let grads = {
            let mut tape = Tape::new(&store);
            let r = tape.lookup(e, 2);
            let s = tape.sum(&[r]);
            tape.backward(s)
        };
        store.sgd_step(&grads, 0.5);
        assert_eq!(store.get(e).data, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.5]);
    }
}
