use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError, Method, ResultRow, StepRow};
use crate::agent::{argmax, rollout_from, AgentConfig, AgentParams, PolicyMode};
use crate::baselines::{classical, random_average, random_recurrent, single_view, Classical, MethodScore};
use crate::envgrid::{generate_synthetic, init_pose, load_dataset, split, Dataset};
use crate::ndgrad::Tape;
use crate::rng::Stream;
use crate::train::{train, TrainConfig, TrainOutcome, TrainPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Prediction of head `T_eval`.
    FinalHead,
    /// Argmax of the class probabilities averaged over heads `1..=T_eval`.
    AverageHeads,
}

/// Accuracy of a trained agent over `T_eval`-step episodes, one per test
/// instance; instance `i` draws from `Stream::new(seed, "eval").fork(i)`.
pub fn evaluate(
    params: &AgentParams,
    cfg: &AgentConfig,
    test: &Dataset,
    t_eval: usize,
    mode: EvalMode,
    policy: &PolicyMode,
    seed: u64,
) -> Result<f64, HarnessError> {
    if t_eval == 0 || t_eval > cfg.steps {
        return Err(HarnessError::Config(format!("evaluation horizon {t_eval} outside 1..={}", cfg.steps)));
    }
    cfg.check_dataset(&test.meta).map_err(|e| HarnessError::Data(e.to_string()))?;
    let eval = Stream::new(seed, "eval");
    let mut tape = Tape::new();
    let mut hits = 0usize;
    for (i, inst) in test.instances.iter().enumerate() {
        let mut rng = eval.fork(i as u64);
        let start = init_pose(cfg.grid, &mut rng);
        tape.reset();
        let r = rollout_from(&mut tape, inst, params, cfg, &mut rng, policy, start, t_eval)?;
        let traj = &r.trajectory;
        let predicted = match mode {
            EvalMode::FinalHead => traj.predicted(t_eval),
            EvalMode::AverageHeads => {
                let mut avg = vec![0.0; cfg.classes];
                for lp in &traj.class_log_probs {
                    for (a, l) in avg.iter_mut().zip(lp) {
                        *a += l.exp();
                    }
                }
                argmax(&avg)
            }
        };
        hits += usize::from(predicted == inst.label);
    }
    Ok(hits as f64 / test.len().max(1) as f64)
}

/// Accuracy of always answering the test split's most frequent class.
pub fn chance_accuracy(test: &Dataset) -> f64 {
    let counts = test.class_counts();
    counts[test.modal_class()] as f64 / test.len().max(1) as f64
}

pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Stratified train/validation/test split from the seed's `split` stream.
pub fn make_splits(ds: &Dataset, fractions: &[f64], seed: u64) -> Result<Splits, HarnessError> {
    let mut parts = split(ds, fractions, &mut Stream::new(seed, "split")).map_err(|e| HarnessError::Data(e.to_string()))?;
    if parts.len() != 3 {
        return Err(HarnessError::Config("expected three split fractions".into()));
    }
    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok(Splits { train, val, test })
}

/// The experiment's dataset: the VGD file if one is configured, otherwise
/// the synthetic spec generated from the seed's `data-gen` stream.
pub fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset, HarnessError> {
    match (&cfg.data.path, &cfg.data.synthetic) {
        (Some(p), None) => load_vgd(p),
        (None, Some(spec)) => generate_synthetic(spec, &mut Stream::new(seed, "data-gen"))
            .map_err(|e| HarnessError::Config(e.to_string())),
        (None, None) => Err(HarnessError::Config("no dataset: set data.path or data.synthetic".into())),
        (Some(_), Some(_)) => Err(HarnessError::Config("give either data.path or data.synthetic, not both".into())),
    }
}

pub fn load_vgd(path: &Path) -> Result<Dataset, HarnessError> {
    load_dataset(path).map_err(|e| HarnessError::Data(e.to_string()))
}

/// Training settings implied by an agent method.
pub fn agent_train_config(method: Method, base: &TrainConfig) -> TrainConfig {
    match method {
        Method::ActiveRnn => TrainConfig { lookahead: false, policy: TrainPolicy::Learned, ..base.clone() },
        Method::LookaheadActiveRnn | Method::LookaheadActiveRnnAverage => {
            TrainConfig { lookahead: true, policy: TrainPolicy::Learned, ..base.clone() }
        }
        Method::RandomRecurrent => TrainConfig { lookahead: false, policy: TrainPolicy::Random, ..base.clone() },
        _ => base.clone(),
    }
}

/// Name under which an agent checkpoint reports its results.
pub fn agent_method_name(cfg: &TrainConfig, mode: EvalMode) -> String {
    let base = match (cfg.policy, cfg.lookahead) {
        (TrainPolicy::Random, _) => "random-recurrent",
        (TrainPolicy::Learned, true) => "lookahead-active-rnn",
        (TrainPolicy::Learned, false) => "active-rnn",
    };
    match mode {
        EvalMode::FinalHead => base.to_string(),
        EvalMode::AverageHeads => format!("{base}-average"),
    }
}

/// Per-step accuracies of an agent on the test split.
pub fn agent_scores(out: &TrainOutcome, cfg: &TrainConfig, test: &Dataset, mode: EvalMode) -> Result<MethodScore, HarnessError> {
    let step_acc = (1..=out.agent.steps)
        .map(|t| evaluate(&out.best, &out.agent, test, t, mode, &cfg.eval_mode(), cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MethodScore { step_acc, mean_steps: None })
}

/// Trains (where needed) and scores one method for one seed.
pub fn run_method(method: Method, splits: &Splits, cfg: &ExperimentConfig, seed: u64) -> Result<MethodScore, HarnessError> {
    let tc = cfg.train_for(seed);
    let cc = cfg.classical_for(seed);
    let Splits { train: tr, val, test } = splits;
    Ok(match method {
        Method::ActiveRnn | Method::LookaheadActiveRnn | Method::LookaheadActiveRnnAverage => {
            let tc = agent_train_config(method, &tc);
            let out = train(tr, val, &tc)?;
            let mode = if method == Method::LookaheadActiveRnnAverage { EvalMode::AverageHeads } else { EvalMode::FinalHead };
            agent_scores(&out, &tc, test, mode)?
        }
        Method::RandomRecurrent => random_recurrent(tr, val, test, &tc)?,
        Method::SingleView => single_view(tr, val, test, &tc)?,
        Method::RandomAverage => random_average(tr, val, test, &tc)?,
        Method::Transinfo => classical(Classical::Transinfo, tr, test, &cc)?,
        Method::Seqdp => classical(Classical::Seqdp, tr, test, &cc)?,
        Method::TransinfoSeqdp => classical(Classical::TransinfoSeqdp, tr, test, &cc)?,
        Method::Chance => MethodScore { step_acc: vec![chance_accuracy(test); cfg.steps], mean_steps: None },
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<ResultRow>,
    pub steps: Vec<StepRow>,
}

impl ExperimentOutput {
    pub fn push(&mut self, method: &str, seed: u64, horizons: &[usize], score: &MethodScore) {
        for &t in horizons {
            self.results.push(ResultRow { method: method.into(), steps: t, seed, accuracy: score.step_acc[t - 1] });
        }
        for (t, &a) in score.step_acc.iter().enumerate() {
            self.steps.push(StepRow { method: method.into(), seed, t: t + 1, accuracy: a });
        }
    }
}

/// Runs the configured method for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let mut out = ExperimentOutput::default();
    for &seed in &cfg.seeds {
        let ds = load_data(cfg, seed)?;
        let splits = make_splits(&ds, &cfg.data.fractions, seed)?;
        let score = run_method(cfg.method, &splits, cfg, seed)?;
        out.push(cfg.method.name(), seed, &cfg.horizons(), &score);
    }
    Ok(out)
}
