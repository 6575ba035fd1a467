//! Parameterized layers built from tape primitives.

use serde::{Deserialize, Serialize};

use super::{Activation, NdError, ParamId, ParamStore, Tape, Var};
use crate::rng::Stream;

/// `y = W x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Stream,
    ) -> Result<Self, NdError> {
        let weight = store.insert_weight(&format!("{name}.weight"), out_dim, in_dim, rng)?;
        let bias = store.insert_bias(&format!("{name}.bias"), out_dim)?;
        Ok(Linear { weight, bias, in_dim, out_dim })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, NdError> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.affine(x, w, b)
    }

    pub fn forward_act(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        act: Activation,
    ) -> Result<Var, NdError> {
        let y = self.forward(tape, store, x)?;
        Ok(tape.activation(y, act))
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Elman cell: `h' = tanh(W_hh h + W_xh x + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElmanCell {
    pub w_hh: ParamId,
    pub w_xh: ParamId,
    pub bias: ParamId,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl ElmanCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        state_dim: usize,
        rng: &mut Stream,
    ) -> Result<Self, NdError> {
        let w_hh = store.insert_weight(&format!("{name}.w_hh"), state_dim, state_dim, rng)?;
        let w_xh = store.insert_weight(&format!("{name}.w_xh"), state_dim, input_dim, rng)?;
        let bias = store.insert_bias(&format!("{name}.bias"), state_dim)?;
        Ok(ElmanCell { w_hh, w_xh, bias, state_dim, input_dim })
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.w_hh, self.w_xh, self.bias]
    }
}

pub fn rnn_step(
    tape: &mut Tape,
    store: &ParamStore,
    cell: &ElmanCell,
    prev_state: Var,
    input: Var,
) -> Result<Var, NdError> {
    let w_hh = tape.param(store, cell.w_hh);
    let w_xh = tape.param(store, cell.w_xh);
    let b = tape.param(store, cell.bias);
    let rec = tape.matvec(w_hh, prev_state)?;
    let pre = tape.affine(input, w_xh, b)?;
    let sum = tape.add(rec, pre)?;
    Ok(tape.tanh(sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::DenseArray;

    fn set(store: &mut ParamStore, id: ParamId, data: Vec<f64>) {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = DenseArray::new(shape, data).unwrap();
    }

    #[test]
    fn affine_examples() {
        let mut rng = Stream::new(0, "t");
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 2, 2, &mut rng).unwrap();
        let cases = [
            (vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], vec![3.0, -1.0], vec![3.0, -1.0]),
            (vec![0.0; 4], vec![5.0, 5.0], vec![0.3, -7.0], vec![5.0, 5.0]),
            (vec![1.0, 2.0, 0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![4.0, 1.0]),
        ];
        for (w, b, x, want) in cases {
            set(&mut store, lin.weight, w);
            set(&mut store, lin.bias, b);
            let mut tape = Tape::new();
            let xv = tape.input(x);
            let y = lin.forward(&mut tape, &store, xv).unwrap();
            assert_eq!(tape.value(y), want.as_slice());
        }
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let mut rng = Stream::new(0, "t");
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 3, 2, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let err = lin.forward(&mut tape, &store, x).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
    }

    #[test]
    fn rnn_zero_params_give_zero_state() {
        let mut rng = Stream::new(0, "t");
        let mut store = ParamStore::new();
        let cell = ElmanCell::new(&mut store, "r", 3, 4, &mut rng).unwrap();
        for id in cell.params() {
            store.value_mut(id).fill(0.0);
        }
        let mut tape = Tape::new();
        let h = tape.input(vec![0.3, -0.2, 0.9, 1.0]);
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let out = rnn_step(&mut tape, &store, &cell, h, x).unwrap();
        assert_eq!(tape.value(out), &[0.0; 4]);
    }

    #[test]
    fn rnn_decoupled_is_elementwise_tanh() {
        let mut rng = Stream::new(0, "t");
        let mut store = ParamStore::new();
        let cell = ElmanCell::new(&mut store, "r", 3, 3, &mut rng).unwrap();
        store.value_mut(cell.w_hh).fill(0.0);
        set(&mut store, cell.w_xh, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let mut tape = Tape::new();
        let h = tape.input(vec![9.0, 9.0, 9.0]);
        let x = tape.input(vec![0.5, 0.5, 0.5]);
        let out = rnn_step(&mut tape, &store, &cell, h, x).unwrap();
        for v in tape.value(out) {
            assert_eq!(*v, 0.5f64.tanh());
        }
    }

    #[test]
    fn rnn_three_steps_match_straight_line_loop() {
        let mut rng = Stream::new(11, "t");
        let mut store = ParamStore::new();
        let cell = ElmanCell::new(&mut store, "r", 2, 3, &mut rng).unwrap();
        store.value_mut(cell.bias).data_mut().copy_from_slice(&[0.1, -0.2, 0.05]);
        let inputs = [[0.4, -1.0], [0.2, 0.7], [-0.3, 0.1]];

        let mut tape = Tape::new();
        let mut h = tape.input(vec![0.0; 3]);
        for x in &inputs {
            let xv = tape.input(x.to_vec());
            h = rnn_step(&mut tape, &store, &cell, h, xv).unwrap();
        }

        let whh = store.value(cell.w_hh).data();
        let wxh = store.value(cell.w_xh).data();
        let b = store.value(cell.bias).data();
        let mut state = [0.0f64; 3];
        for x in &inputs {
            let mut next = [0.0f64; 3];
            for i in 0..3 {
                let mut acc = b[i];
                for j in 0..3 {
                    acc += whh[i * 3 + j] * state[j];
                }
                for j in 0..2 {
                    acc += wxh[i * 2 + j] * x[j];
                }
                next[i] = acc.tanh();
            }
            state = next;
        }
        for (a, e) in tape.value(h).iter().zip(&state) {
            assert!((a - e).abs() < 1e-14);
        }
    }
}
