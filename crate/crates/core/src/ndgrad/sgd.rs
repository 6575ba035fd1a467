use super::{NdError, ParamStore};

/// `value -= lr * grad` for every block, then zero the gradients.
pub fn sgd_update(store: &mut ParamStore, learning_rate: f64) -> Result<(), NdError> {
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(NdError::LearningRate(learning_rate));
    }
    for id in store.ids().collect::<Vec<_>>() {
        let block = store.block_mut(id);
        for (v, g) in block.value.data_mut().iter_mut().zip(block.grad.data()) {
            *v -= learning_rate * g;
        }
    }
    store.zero_grads();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{DenseArray, GradSink};

    fn scalar_store(v: f64, g: f64) -> (ParamStore, crate::ndgrad::ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert("p", DenseArray::vector(vec![v])).unwrap();
        s.accumulate(id, &[g]);
        (s, id)
    }

    #[test]
    fn single_step_arithmetic() {
        let (mut s, id) = scalar_store(1.0, 2.0);
        sgd_update(&mut s, 0.1).unwrap();
        assert_eq!(s.value(id).data()[0], 1.0 - 0.1 * 2.0);
        assert_eq!(s.grad(id).data()[0], 0.0);
    }

    #[test]
    fn zero_grad_leaves_value() {
        let (mut s, id) = scalar_store(-3.25, 0.0);
        sgd_update(&mut s, 0.5).unwrap();
        assert_eq!(s.value(id).data()[0], -3.25);
    }

    #[test]
    fn two_steps_exact() {
        let (mut s, id) = scalar_store(1.0, 2.0);
        sgd_update(&mut s, 0.25).unwrap();
        s.accumulate(id, &[-4.0]);
        sgd_update(&mut s, 0.25).unwrap();
        // 1 - 0.5 = 0.5; 0.5 + 1.0 = 1.5
        assert_eq!(s.value(id).data()[0], 1.5);
    }

    #[test]
    fn rejects_non_positive_rate() {
        let (mut s, _) = scalar_store(1.0, 1.0);
        assert!(matches!(sgd_update(&mut s, 0.0), Err(NdError::LearningRate(_))));
        assert!(matches!(sgd_update(&mut s, -1.0), Err(NdError::LearningRate(_))));
        assert!(sgd_update(&mut s, f64::NAN).is_err());
    }
}
