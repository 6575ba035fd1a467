use std::io::Write;

use serde::{Deserialize, Serialize};

use super::trainer::{train, TrainConfig};
use super::TrainError;
use crate::envgrid::Dataset;
use crate::rng::Stream;

/// Ranges for random search. Learning rate and lambda are sampled
/// log-uniformly; the discrete lists uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub lambda: (f64, f64),
    pub sensor_dims: Vec<usize>,
    pub aggregate_dims: Vec<usize>,
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rate: (0.01, 0.5),
            lambda: (0.01, 10.0),
            sensor_dims: vec![16, 32, 64],
            aggregate_dims: vec![16, 32, 64],
            batch_sizes: vec![16, 32, 64],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), TrainError> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !range_ok(self.learning_rate) || !range_ok(self.lambda) {
            return Err(TrainError::EmptySpace("ranges need 0 < lo <= hi".into()));
        }
        let lists = [&self.sensor_dims, &self.aggregate_dims, &self.batch_sizes];
        if lists.iter().any(|l| l.is_empty() || l.contains(&0)) {
            return Err(TrainError::EmptySpace("width and batch lists need positive entries".into()));
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut Stream, (lo, hi): (f64, f64)) -> f64 {
    rng.uniform_range(lo.ln(), hi.ln()).exp().clamp(lo, hi)
}

/// The `budget` configurations a search with this seed will try.
pub fn sample_configs(
    space: &SearchSpace,
    base: &TrainConfig,
    budget: usize,
    seed: u64,
) -> Result<Vec<TrainConfig>, TrainError> {
    space.validate()?;
    if budget == 0 {
        return Err(TrainError::EmptySpace("budget is zero".into()));
    }
    let mut rng = Stream::new(seed, "search");
    Ok((0..budget)
        .map(|_| TrainConfig {
            learning_rate: log_uniform(&mut rng, space.learning_rate),
            lambda: log_uniform(&mut rng, space.lambda),
            sensor_dim: space.sensor_dims[rng.below(space.sensor_dims.len())],
            aggregate_dim: space.aggregate_dims[rng.below(space.aggregate_dims.len())],
            batch_size: space.batch_sizes[rng.below(space.batch_sizes.len())],
            ..base.clone()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub trial: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub sensor_dim: usize,
    pub aggregate_dim: usize,
    pub batch_size: usize,
    pub best_epoch: usize,
    pub val_acc: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_val_acc: f64,
    pub ledger: Vec<LedgerEntry>,
}

/// Trains every sampled configuration; the first best validation accuracy wins.
pub fn hyperparam_search(
    train_split: &Dataset,
    val_split: &Dataset,
    base: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome, TrainError> {
    let configs = sample_configs(space, base, budget, seed)?;
    let mut ledger = Vec::with_capacity(budget);
    let mut best: Option<(usize, f64)> = None;
    for (trial, cfg) in configs.iter().enumerate() {
        let out = train(train_split, val_split, cfg)?;
        ledger.push(LedgerEntry {
            trial,
            learning_rate: cfg.learning_rate,
            lambda: cfg.lambda,
            sensor_dim: cfg.sensor_dim,
            aggregate_dim: cfg.aggregate_dim,
            batch_size: cfg.batch_size,
            best_epoch: out.best_epoch,
            val_acc: out.best_val_acc,
        });
        if best.is_none_or(|(_, acc)| out.best_val_acc > acc) {
            best = Some((trial, out.best_val_acc));
        }
    }
    let (i, acc) = best.expect("budget is positive");
    Ok(SearchOutcome { best: configs[i].clone(), best_val_acc: acc, ledger })
}

pub fn write_ledger<W: Write>(out: W, ledger: &[LedgerEntry]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in ledger {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}
