use rand::Rng;

use super::params::{Component, ParamId, ParamStore};
use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gated recurrent cell with input, forget and output gates.
///
/// Weights are a single `(input + hidden) x 4·hidden` matrix whose column
/// blocks are, in order, input gate, forget gate, candidate, output gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        tag: Component,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = input_dim + hidden_dim;
        let weight = store.add(
            format!("{prefix}.weight"),
            tag,
            Tensor::uniform(vec![fan_in, 4 * hidden_dim], fan_in, rng),
        )?;
        let bias = store.add(
            format!("{prefix}.bias"),
            tag,
            Tensor::uniform(vec![4 * hidden_dim], fan_in, rng),
        )?;
        Ok(LstmCell {
            weight,
            bias,
            input_dim,
            hidden_dim,
        })
    }

    /// Looks up an already-registered cell by name prefix.
    pub fn bind<T: Real>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let weight = store.require(&format!("{prefix}.weight"))?;
        let bias = store.require(&format!("{prefix}.bias"))?;
        let shape = store.tensor(weight).shape();
        if shape.len() != 2 || shape[1] % 4 != 0 || shape[0] < shape[1] / 4 {
            return Err(Error::shape(
                "lstm",
                format!("{prefix}.weight has unexpected shape {shape:?}"),
            ));
        }
        let hidden_dim = shape[1] / 4;
        Ok(LstmCell {
            weight,
            bias,
            input_dim: shape[0] - hidden_dim,
            hidden_dim,
        })
    }

    /// One recurrent update: returns the new `(hidden, cell)` pair.
    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        input: Var,
        state: (Var, Var),
    ) -> Result<(Var, Var)> {
        let (h, c) = state;
        let h_dim = self.hidden_dim;
        if tape.dims(input) != (1, self.input_dim)
            || tape.dims(h) != (1, h_dim)
            || tape.dims(c) != (1, h_dim)
        {
            return Err(Error::shape(
                "lstm_step",
                format!(
                    "input {:?}, hidden {:?}, cell {:?} for a {}->{} cell",
                    tape.dims(input),
                    tape.dims(h),
                    tape.dims(c),
                    self.input_dim,
                    h_dim
                ),
            ));
        }
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xh = tape.concat(&[input, h])?;
        let z = tape.linear(xh, w, b)?;
        let zi = tape.slice_cols(z, 0, h_dim)?;
        let zf = tape.slice_cols(z, h_dim, h_dim)?;
        let zg = tape.slice_cols(z, 2 * h_dim, h_dim)?;
        let zo = tape.slice_cols(z, 3 * h_dim, h_dim)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Runs the cell over `inputs`, returning every hidden state.
    pub fn unroll<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        inputs: &[Var],
        init: (Var, Var),
    ) -> Result<Vec<Var>> {
        let mut state = init;
        let mut hidden = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(tape, x, state)?;
            hidden.push(state.0);
        }
        Ok(hidden)
    }
}
