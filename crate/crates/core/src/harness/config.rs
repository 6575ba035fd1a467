use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::ClassicalConfig;
use crate::envgrid::SyntheticSpec;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ActiveRnn,
    LookaheadActiveRnn,
    LookaheadActiveRnnAverage,
    SingleView,
    RandomAverage,
    RandomRecurrent,
    Transinfo,
    Seqdp,
    TransinfoSeqdp,
    Chance,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Chance,
        Method::SingleView,
        Method::RandomAverage,
        Method::RandomRecurrent,
        Method::Transinfo,
        Method::Seqdp,
        Method::TransinfoSeqdp,
        Method::ActiveRnn,
        Method::LookaheadActiveRnn,
        Method::LookaheadActiveRnnAverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ActiveRnn => "active-rnn",
            Method::LookaheadActiveRnn => "lookahead-active-rnn",
            Method::LookaheadActiveRnnAverage => "lookahead-active-rnn-average",
            Method::SingleView => "single-view",
            Method::RandomAverage => "random-average",
            Method::RandomRecurrent => "random-recurrent",
            Method::Transinfo => "transinfo",
            Method::Seqdp => "seqdp",
            Method::TransinfoSeqdp => "transinfo-seqdp",
            Method::Chance => "chance",
        }
    }

    /// Whether the method trains the recurrent agent.
    pub fn is_agent(self) -> bool {
        matches!(
            self,
            Method::ActiveRnn | Method::LookaheadActiveRnn | Method::LookaheadActiveRnnAverage | Method::RandomRecurrent
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                HarnessError::Config(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// A VGD file.
    pub path: Option<PathBuf>,
    /// Generated per run from the run seed when no path is given.
    pub synthetic: Option<SyntheticSpec>,
    /// Train, validation and test fractions.
    pub fractions: Vec<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, synthetic: None, fractions: vec![4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0] }
    }
}

/// One experiment: a method run over several seeds.
///
/// Read from TOML. Top-level keys: `method`, `seeds`, `steps` (episode
/// length T, copied into both `[train]` and `[classical]`), `eval_steps`
/// (horizons to report, each at most `steps`) and `output`. Sections:
/// `[data]`, `[train]`, `[classical]` (with `[classical.bank]`). Omitted
/// keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub eval_steps: Vec<usize>,
    pub output: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub classical: ClassicalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::LookaheadActiveRnn,
            seeds: vec![0],
            steps: 3,
            eval_steps: Vec::new(),
            output: PathBuf::from("runs"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            classical: ClassicalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Horizons to report; defaults to the episode length alone.
    pub fn horizons(&self) -> Vec<usize> {
        if self.eval_steps.is_empty() {
            vec![self.steps]
        } else {
            self.eval_steps.clone()
        }
    }

    /// Training settings for one seed, with the episode length applied.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, steps: self.steps, ..self.train.clone() }
    }

    pub fn classical_for(&self, seed: u64) -> ClassicalConfig {
        ClassicalConfig { seed, steps: self.steps, ..self.classical.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.steps == 0 {
            return Err(HarnessError::Config("steps must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if let Some(&t) = self.horizons().iter().find(|&&t| t == 0 || t > self.steps) {
            return Err(HarnessError::Config(format!("evaluation horizon {t} outside 1..={}", self.steps)));
        }
        if self.data.fractions.len() != 3 {
            return Err(HarnessError::Config("data.fractions needs train, validation and test parts".into()));
        }
        if self.data.path.is_some() && self.data.synthetic.is_some() {
            return Err(HarnessError::Config("give either data.path or data.synthetic, not both".into()));
        }
        self.train_for(0).validate()?;
        Ok(())
    }
}
