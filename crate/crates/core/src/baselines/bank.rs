use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::envgrid::{Dataset, GridDims, Pose};
use crate::ndgrad::log_softmax;
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig { learning_rate: 0.5, epochs: 60, batch_size: 32 }
    }
}

/// One softmax-regression classifier per grid cell, each fit only on the
/// training views seen at that cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseBank {
    dims: GridDims,
    classes: usize,
    feature_dim: usize,
    /// Per cell: `C x D` weights, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl PoseBank {
    pub fn train(ds: &Dataset, cfg: &BankConfig, seed: u64) -> Result<Self, BaselineError> {
        if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) || cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(BaselineError::Config(format!("invalid bank configuration {cfg:?}")));
        }
        if ds.is_empty() {
            return Err(BaselineError::Config("empty training split".into()));
        }
        let (dims, c, d) = (ds.meta.dims, ds.meta.classes, ds.meta.feature_dim);
        let mut bank = PoseBank {
            dims,
            classes: c,
            feature_dim: d,
            weights: vec![vec![0.0; c * d]; dims.cells()],
            biases: vec![vec![0.0; c]; dims.cells()],
        };
        let root = Stream::new(seed, "bank");
        for cell in 0..dims.cells() {
            let pose = dims.pose_of(cell);
            let views: Vec<(Vec<f64>, usize)> =
                ds.instances.iter().map(|i| (i.observe_f64(pose).expect("pose in grid"), i.label)).collect();
            bank.fit_cell(cell, &views, cfg, &mut root.fork(cell as u64));
        }
        Ok(bank)
    }

    fn fit_cell(&mut self, cell: usize, views: &[(Vec<f64>, usize)], cfg: &BankConfig, rng: &mut Stream) {
        let (c, d) = (self.classes, self.feature_dim);
        let mut order: Vec<usize> = (0..views.len()).collect();
        let mut gw = vec![0.0; c * d];
        let mut gb = vec![0.0; c];
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for batch in order.chunks(cfg.batch_size) {
                gw.fill(0.0);
                gb.fill(0.0);
                for &i in batch {
                    let (x, y) = &views[i];
                    let p: Vec<f64> = self.cell_log_probs(cell, x).iter().map(|l| l.exp()).collect();
                    for k in 0..c {
                        let delta = p[k] - f64::from(u8::from(k == *y));
                        gb[k] += delta;
                        for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *g += delta * xi;
                        }
                    }
                }
                let step = cfg.learning_rate / batch.len() as f64;
                for (w, g) in self.weights[cell].iter_mut().zip(&gw) {
                    *w -= step * g;
                }
                for (b, g) in self.biases[cell].iter_mut().zip(&gb) {
                    *b -= step * g;
                }
            }
        }
    }

    fn cell_log_probs(&self, cell: usize, view: &[f64]) -> Vec<f64> {
        let d = self.feature_dim;
        let w = &self.weights[cell];
        let logits: Vec<f64> = (0..self.classes)
            .map(|k| self.biases[cell][k] + w[k * d..(k + 1) * d].iter().zip(view).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        log_softmax(&logits)
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Class log-probabilities of `view` under the classifier for `pose`.
    pub fn log_probs(&self, pose: Pose, view: &[f64]) -> Vec<f64> {
        self.cell_log_probs(self.dims.cell_index(pose), view)
    }

    pub fn likelihood(&self, pose: Pose, view: &[f64]) -> Vec<f64> {
        self.log_probs(pose, view).iter().map(|l| l.exp()).collect()
    }

    /// Weights and biases of the classifier at `pose`.
    pub fn classifier(&self, pose: Pose) -> (&[f64], &[f64]) {
        let cell = self.dims.cell_index(pose);
        (&self.weights[cell], &self.biases[cell])
    }
}
