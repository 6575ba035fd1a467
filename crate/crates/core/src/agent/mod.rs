//! The recurrent agent: sensor, aggregator, actor, classifier bank and
//! look-ahead, wired together by [`rollout`].

mod config;
mod modules;
mod rollout;
mod trace;


use thiserror::Error;

pub use config::{AgentConfig, Proprio};
pub use modules::{
    actor_forward, aggregator_forward, classifier_forward, lookahead_forward, sample_policy,
    sensor_forward, AgentParams, Module, Sensor, TwoLayer,
};
pub use rollout::{argmax, rollout, rollout_from, PolicyMode, Rollout, RolloutVars, Trajectory};
pub use trace::{write_traces, TraceRecord};

use crate::envgrid::EnvError;
use crate::ndgrad::NdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent configuration: {0}")]
    Config(String),
    #[error("step {step} outside 1..={steps}")]
    StepOutOfRange { step: usize, steps: usize },
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Env(#[from] EnvError),
}
