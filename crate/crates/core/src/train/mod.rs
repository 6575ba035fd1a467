//! Hybrid training: reward, the three loss terms, per-module gradient
//! composition, the early-stopping epoch loop and random search.

mod checkpoint;
mod compose;
mod losses;
mod search;
mod trainer;


use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use compose::{apply_composition, source_weights, GradBundle};
pub use losses::{compute_reward, episode_losses, reinforce_surrogate, EpisodeLosses, LossOptions, RewardSpec};
pub use search::{hyperparam_search, sample_configs, write_ledger, LedgerEntry, SearchOutcome, SearchSpace};
pub use trainer::{
    score_split, train, write_history, EpochRecord, SplitScore, TrainConfig, TrainOutcome, TrainPolicy,
    TrainState, Trainer, HISTORY_HEADER,
};

use crate::agent::AgentError;
use crate::ndgrad::NdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error("gradient composition: {0}")]
    Composition(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize, what: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("search space: {0}")]
    EmptySpace(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Nd(#[from] NdError),
}
