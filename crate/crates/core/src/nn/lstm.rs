//! LSTM cell with input, forget and output gates and a tanh candidate.

use rand::Rng;

use super::tape::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One LSTM layer: the four gate blocks fused into a single affine map over
/// `[x; h_prev]`, in the order input, forget, output, candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w = store.add(&format!("{name}.w"), Tensor::glorot(4 * hidden, input + hidden, rng), false);
        let b = store.add(&format!("{name}.b"), Tensor::zeros(4 * hidden, 1), false);
        LstmLayer { w, b, input, hidden }
    }
}

/// Cell and hidden state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmState {
    pub c: Var,
    pub h: Var,
}

pub fn lstm_step(tape: &mut Tape<'_>, layer: &LstmLayer, x: Var, prev: LstmState) -> Result<LstmState> {
    let n = layer.hidden;
    if tape.value(x).len() != layer.input {
        return Err(Error::Dimension {
            expected: layer.input,
            got: tape.value(x).len(),
        });
    }
    let xh = tape.concat(&[x, prev.h]);
    let z = tape.affine(layer.w, layer.b, xh)?;
    let zi = tape.slice(z, 0, n);
    let zf = tape.slice(z, n, n);
    let zo = tape.slice(z, 2 * n, n);
    let zg = tape.slice(z, 3 * n, n);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);
    let keep = tape.mul(f, prev.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok(LstmState { c, h })
}
