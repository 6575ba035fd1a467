//! Experiment runner: configs, seeding, method dispatch, evaluation,
//! result tables and the command line.

pub mod cli;
mod config;
mod experiment;
pub mod gradsuite;
mod results;
mod seeds;

use thiserror::Error;

pub use config::{DataConfig, ExperimentConfig, Method};
pub use experiment::{
    agent_method_name, agent_scores, agent_train_config, chance_accuracy, evaluate, load_data, load_vgd, make_splits,
    run_experiment, run_method, EvalMode, ExperimentOutput, Splits,
};
pub use results::{
    curves, read_rows, summarize, table, write_rows, write_table, CurvePoint, ResultRow, StepRow, Summary, TableRow,
};
pub use seeds::{seed_everything, SeedStreams, STREAM_NAMES};

use crate::agent::AgentError;
use crate::baselines::BaselineError;
use crate::envgrid::{EnvError, VgdError};
use crate::ndgrad::NdError;
use crate::train::TrainError;

/// Errors surfaced by the harness, grouped by process exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// 3 for configuration, 4 for data, 5 for runtime failures. Usage
    /// errors are reported by the argument parser with code 2.
    pub fn code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 3,
            HarnessError::Data(_) => 4,
            HarnessError::Runtime(_) => 5,
        }
    }
}

impl From<TrainError> for HarnessError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptySpace(_) => HarnessError::Config(e.to_string()),
            TrainError::Checkpoint(_) => HarnessError::Data(e.to_string()),
            TrainError::Agent(a) => a.into(),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<BaselineError> for HarnessError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Config(_) => HarnessError::Config(e.to_string()),
            BaselineError::Train(t) => t.into(),
            BaselineError::Agent(a) => a.into(),
            BaselineError::Env(v) => v.into(),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Config(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Spec(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<VgdError> for HarnessError {
    fn from(e: VgdError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<NdError> for HarnessError {
    fn from(e: NdError) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
