use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DenseArray, NdError};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub id: String,
    pub value: DenseArray,
    pub grad: DenseArray,
}

/// Receiver for gradients produced by a backward pass.
pub trait GradSink {
    fn accumulate(&mut self, id: ParamId, grad: &[f64]);
}

/// Ordered collection of named parameter blocks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    #[serde(skip)]
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a block with an explicit value.
    pub fn insert(&mut self, id: &str, value: DenseArray) -> Result<ParamId, NdError> {
        if self.by_name.contains_key(id) {
            return Err(NdError::DuplicateParam(id.to_string()));
        }
        let pid = ParamId(self.blocks.len());
        let grad = DenseArray::zeros(value.shape());
        self.blocks.push(ParamBlock { id: id.to_string(), value, grad });
        self.by_name.insert(id.to_string(), pid);
        Ok(pid)
    }

    /// Weight matrix `[rows, cols]` drawn from U(-1/sqrt(cols), 1/sqrt(cols)).
    pub fn insert_weight(
        &mut self,
        id: &str,
        rows: usize,
        cols: usize,
        rng: &mut Stream,
    ) -> Result<ParamId, NdError> {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
        self.insert(id, DenseArray::new(vec![rows, cols], data)?)
    }

    pub fn insert_bias(&mut self, id: &str, len: usize) -> Result<ParamId, NdError> {
        self.insert(id, DenseArray::zeros(&[len]))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.blocks.len()).map(ParamId)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: ParamId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn value(&self, id: ParamId) -> &DenseArray {
        &self.blocks[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseArray {
        &mut self.blocks[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseArray {
        &self.blocks[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// Rebuilds the name index, needed after deserialization.
    pub fn reindex(&mut self) {
        self.by_name =
            self.blocks.iter().enumerate().map(|(i, b)| (b.id.clone(), ParamId(i))).collect();
    }

    pub fn from_blocks(blocks: Vec<ParamBlock>) -> Result<Self, NdError> {
        let mut store = ParamStore::new();
        for b in blocks {
            if b.grad.shape() != b.value.shape() {
                return Err(NdError::Shape(format!(
                    "grad shape {:?} differs from value shape {:?} in {}",
                    b.grad.shape(),
                    b.value.shape(),
                    b.id
                )));
            }
            let pid = store.insert(&b.id, b.value)?;
            store.blocks[pid.0].grad = b.grad;
        }
        Ok(store)
    }

    /// Zero-initialized gradient buffer shaped like this store.
    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer { grads: self.blocks.iter().map(|b| vec![0.0; b.value.len()]).collect() }
    }
}

impl GradSink for ParamStore {
    fn accumulate(&mut self, id: ParamId, grad: &[f64]) {
        let dst = self.blocks[id.0].grad.data_mut();
        for (d, g) in dst.iter_mut().zip(grad) {
            *d += g;
        }
    }
}

/// Gradients held outside the store, one flat vector per block.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn num_blocks(&self) -> usize {
        self.grads.len()
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_zero(&self, id: ParamId) -> bool {
        self.grads[id.0].iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|x| x.is_finite())
    }

    /// `self += scale * other`, block by block.
    pub fn add_scaled(&mut self, other: &GradBuffer, scale: f64) {
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

impl GradSink for GradBuffer {
    fn accumulate(&mut self, id: ParamId, grad: &[f64]) {
        for (d, g) in self.grads[id.0].iter_mut().zip(grad) {
            *d += g;
        }
    }
}
