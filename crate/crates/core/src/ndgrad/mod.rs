//! Dense reverse-mode differentiation: arrays, named parameter blocks, a
//! per-pass tape, SGD and a finite-difference checker.
//!
//! All arithmetic is `f64`.

mod array;
mod gradcheck;
mod layers;
mod params;
mod sgd;
mod tape;

use thiserror::Error;

pub use array::DenseArray;
pub use gradcheck::{
    analytic_grads, check_against, grad_check, relative_error, GradCheckReport, Mismatch,
    COORDS_PER_BLOCK, FD_STEP,
};
pub use layers::{rnn_step, ElmanCell, Linear};
pub use params::{GradBuffer, GradSink, ParamBlock, ParamId, ParamStore};
pub use sgd::sgd_update;
pub use tape::{cosine_distance, log_softmax, Activation, Tape, Var, COSINE_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape already consumed")]
    TapeConsumed,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("duplicate parameter block {0:?}")]
    DuplicateParam(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    #[test]
    fn activation_examples() {
        let mut tape = Tape::new();
        let x = tape.input(vec![0.0, -3.0, 3.0, 1.0]);
        let t = tape.tanh(x);
        let r = tape.relu(x);
        assert_eq!(tape.value(t)[0], 0.0);
        assert_eq!(&tape.value(r)[1..3], &[0.0, 3.0]);
        // tanh(1) = (e - 1/e) / (e + 1/e), evaluated independently to 20 digits.
        assert!((tape.value(t)[3] - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_examples() {
        let v = log_softmax(&[0.0, 0.0]);
        assert!(v.iter().all(|x| (x + 2f64.ln()).abs() < 1e-15));
        let v = log_softmax(&[7.5; 4]);
        assert!(v.iter().all(|x| (x + 4f64.ln()).abs() < 1e-15));
        let v = log_softmax(&[1000.0, 0.0]);
        assert!(v[0].abs() < 1e-300 && (v[1] + 1000.0).abs() < 1e-12);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn quadratic_backward() {
        let mut store = ParamStore::new();
        let id = store.insert("p", DenseArray::vector(vec![1.0, -2.0])).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[2.0, -4.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.input(vec![1.0, 2.0]);
        let mut store = ParamStore::new();
        assert!(matches!(tape.backward(x, &mut store), Err(NdError::NotScalar(_))));
        let s = tape.sum(x);
        tape.reset();
        assert_eq!(tape.backward(s, &mut store), Err(NdError::TapeConsumed));
    }

    #[test]
    fn cosine_distance_examples() {
        let u = [0.3, -1.2, 2.0];
        assert!(cosine_distance(&u, &u).abs() < 1e-15);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine_distance(&u, &neg) - 2.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[1.0, 1.0]) - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn cosine_zero_vector_has_finite_zero_gradient() {
        let mut store = ParamStore::new();
        let id = store.insert("u", DenseArray::vector(vec![0.0, 0.0, 0.0])).unwrap();
        let mut tape = Tape::new();
        let u = tape.param(&store, id);
        let v = tape.input(vec![1.0, 2.0, 3.0]);
        let d = tape.cosine_distance(u, v).unwrap();
        assert_eq!(tape.scalar(d), 1.0);
        tape.backward(d, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[0.0, 0.0, 0.0]);
    }

    fn random_net(seed: u64) -> (ParamStore, Linear, Linear, Linear) {
        let mut rng = Stream::new(seed, "net");
        let mut store = ParamStore::new();
        let a = Linear::new(&mut store, "a", 5, 7, &mut rng).unwrap();
        let b = Linear::new(&mut store, "b", 7, 6, &mut rng).unwrap();
        let c = Linear::new(&mut store, "c", 6, 4, &mut rng).unwrap();
        for l in [a, b, c] {
            for v in store.value_mut(l.bias).data_mut() {
                *v = rng.uniform_range(-0.3, 0.3);
            }
        }
        (store, a, b, c)
    }

    fn net_loss(
        tape: &mut Tape,
        store: &ParamStore,
        (a, b, c): (Linear, Linear, Linear),
        target: usize,
    ) -> Result<Var, NdError> {
        let x = tape.input(vec![0.5, -0.1, 0.9, -1.3, 0.2]);
        let h = a.forward_act(tape, store, x, Activation::Tanh)?;
        let h = b.forward_act(tape, store, h, Activation::Relu)?;
        let o = c.forward(tape, store, h)?;
        let lp = tape.log_softmax(o);
        let p = tape.pick(lp, target);
        Ok(tape.scale(p, -1.0))
    }

    #[test]
    fn backward_matches_finite_differences_on_random_nets() {
        for seed in 0..20 {
            let (mut store, a, b, c) = random_net(seed);
            let mut rng = Stream::new(seed, "coords");
            let r = grad_check(
                |t: &mut Tape, s: &ParamStore| net_loss(t, s, (a, b, c), (seed % 4) as usize),
                &mut store,
                1e-4,
                &mut rng,
            )
            .unwrap();
            assert!(r.passed(), "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let (mut s1, a, b, c) = random_net(3);
        let mut s2 = s1.clone();
        for s in [&mut s1, &mut s2] {
            let mut tape = Tape::new();
            let l = net_loss(&mut tape, s, (a, b, c), 2).unwrap();
            tape.backward(l, s).unwrap();
        }
        assert_eq!(s1, s2);
    }

    #[test]
    fn accumulation_is_linear() {
        let (store, a, b, c) = random_net(8);
        let mut separate = store.grad_buffer();
        let mut tape = Tape::new();
        let la = net_loss(&mut tape, &store, (a, b, c), 0).unwrap();
        let lb = net_loss(&mut tape, &store, (a, b, c), 3).unwrap();
        tape.backward(la, &mut separate).unwrap();
        tape.backward(lb, &mut separate).unwrap();

        let mut joint = store.grad_buffer();
        let sum = tape.add(la, lb).unwrap();
        tape.backward(sum, &mut joint).unwrap();
        for id in store.ids() {
            for (x, y) in separate.get(id).iter().zip(joint.get(id)) {
                assert!((x - y).abs() <= 1e-15 * (1.0 + x.abs()));
            }
        }
    }

    proptest! {
        #[test]
        fn log_softmax_normalizes_and_is_shift_invariant(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let out = log_softmax(&xs);
            let total: f64 = out.iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            for (a, b) in out.iter().zip(log_softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
