//! Comparison systems sharing the environment and compute core: a
//! single-view net, random-motion averaging and recurrent variants, and
//! classical pose-specific-classifier methods (SeqDP fusion and
//! transinformation view selection).

mod bank;
mod fusion;
mod single;
mod transinfo;


use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bank::{BankConfig, PoseBank};
pub use fusion::{entropy, seqdp_update, uniform_posterior, SEQDP_EPS};
pub use single::{random_average, random_average_scores, random_walk, single_view, SingleViewNet};
pub use transinfo::{EpisodeOutcome, Selection, TransInfo, DEFAULT_MC_SAMPLES};

use crate::agent::{AgentConfig, AgentError};
use crate::envgrid::{init_pose, Dataset, EnvError};
use crate::ndgrad::NdError;
use crate::rng::Stream;
use crate::train::{score_split, train, TrainConfig, TrainError, TrainPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("baseline configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nd(#[from] NdError),
}

/// Test accuracy after each step `t = 1..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub step_acc: Vec<f64>,
    /// Mean views used, for methods that may stop early.
    pub mean_steps: Option<f64>,
}

impl MethodScore {
    pub fn from_hits(hits: &[usize], n: usize) -> Self {
        let n = n.max(1) as f64;
        MethodScore { step_acc: hits.iter().map(|&h| h as f64 / n).collect(), mean_steps: None }
    }

    pub fn final_acc(&self) -> f64 {
        *self.step_acc.last().expect("at least one step")
    }
}

/// Agent trained and scored with uniformly random motions; the actor is unused.
pub fn random_recurrent(train_split: &Dataset, val: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<MethodScore, BaselineError> {
    let cfg = TrainConfig { policy: TrainPolicy::Random, ..cfg.clone() };
    let out = train(train_split, val, &cfg)?;
    let s = score_split(&out.best, &out.agent, test, &cfg.eval_mode(), &Stream::new(cfg.seed, "eval"))?;
    Ok(MethodScore { step_acc: s.step_acc, mean_steps: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classical {
    /// Per-view hypotheses, entropy-driven motions, stop on agreement.
    Transinfo,
    /// Bayesian fusion of a fixed number of randomly reached views.
    Seqdp,
    /// Bayesian fusion, entropy-driven motions, stop on agreement.
    TransinfoSeqdp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalConfig {
    pub steps: usize,
    pub seed: u64,
    pub mc_samples: usize,
    pub bank: BankConfig,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig { steps: 3, seed: 0, mc_samples: DEFAULT_MC_SAMPLES, bank: BankConfig::default() }
    }
}

pub fn classical(method: Classical, train_split: &Dataset, test: &Dataset, cfg: &ClassicalConfig) -> Result<MethodScore, BaselineError> {
    if cfg.steps == 0 {
        return Err(BaselineError::Config("steps must be positive".into()));
    }
    let bank = PoseBank::train(train_split, &cfg.bank, cfg.seed)?;
    classical_with_bank(method, &bank, train_split, test, cfg)
}

pub fn classical_with_bank(
    method: Classical,
    bank: &PoseBank,
    train_split: &Dataset,
    test: &Dataset,
    cfg: &ClassicalConfig,
) -> Result<MethodScore, BaselineError> {
    let set = AgentConfig::for_dataset(&train_split.meta, cfg.steps).motion_set();
    let ti = TransInfo::new(bank, train_split, set, cfg.mc_samples)?;
    let eval = Stream::new(cfg.seed, "eval");
    let mut hits = vec![0usize; cfg.steps];
    let mut used = 0usize;
    for (i, inst) in test.instances.iter().enumerate() {
        let mut rng = eval.fork(i as u64);
        let start = init_pose(test.meta.dims, &mut rng);
        let out = match method {
            Classical::Transinfo => ti.episode(inst, start, cfg.steps, &mut rng)?,
            Classical::Seqdp => ti.fusion_episode(inst, start, cfg.steps, Selection::Random, false, &mut rng)?,
            Classical::TransinfoSeqdp => ti.fusion_episode(inst, start, cfg.steps, Selection::Entropy, true, &mut rng)?,
        };
        used += out.steps();
        for (t, h) in hits.iter_mut().enumerate() {
            *h += usize::from(out.prediction_at(t + 1) == inst.label);
        }
    }
    let mut score = MethodScore::from_hits(&hits, test.len());
    score.mean_steps = Some(used as f64 / test.len().max(1) as f64);
    Ok(score)
}
