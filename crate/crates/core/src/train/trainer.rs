use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::compose::{apply_composition, GradBundle};
use super::losses::{episode_losses, LossOptions, RewardSpec};
use super::TrainError;
use crate::agent::{rollout, AgentConfig, AgentParams, PolicyMode};
use crate::envgrid::Dataset;
use crate::ndgrad::{cosine_distance, sgd_update, Tape};
use crate::rng::{Stream, StreamState};

/// How motions are chosen while training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainPolicy {
    /// Sampled from the actor, which learns from the reward.
    Learned,
    /// Uniformly random; the actor is never run or trained.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub steps: usize,
    pub greedy_loss: bool,
    pub lookahead: bool,
    pub policy: TrainPolicy,
    /// Treat the look-ahead target as a constant.
    pub stop_lookahead_target: bool,
    /// Subtract the modal-class indicator from the reward.
    pub reward_baseline: bool,
    pub sensor_dim: usize,
    pub aggregate_dim: usize,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32,
            lambda: 1.0,
            epochs: 300,
            patience: 25,
            seed: 0,
            steps: 3,
            greedy_loss: true,
            lookahead: true,
            policy: TrainPolicy::Learned,
            stop_lookahead_target: false,
            reward_baseline: true,
            sensor_dim: 32,
            aggregate_dim: 32,
            hidden_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::Config(what.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 || self.steps == 0 {
            return bad("batch size, epochs, patience and steps must be positive");
        }
        if self.sensor_dim == 0 || self.aggregate_dim == 0 || self.hidden_dim == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn agent_config(&self, ds: &Dataset) -> AgentConfig {
        AgentConfig {
            sensor_dim: self.sensor_dim,
            aggregate_dim: self.aggregate_dim,
            hidden_dim: self.hidden_dim,
            ..AgentConfig::for_dataset(&ds.meta, self.steps)
        }
    }

    pub fn rollout_mode(&self) -> PolicyMode {
        match self.policy {
            TrainPolicy::Learned => PolicyMode::Learned,
            TrainPolicy::Random => PolicyMode::Random,
        }
    }

    /// Policy used when scoring: the actor's most probable motion, or random.
    pub fn eval_mode(&self) -> PolicyMode {
        match self.policy {
            TrainPolicy::Learned => PolicyMode::Greedy,
            TrainPolicy::Random => PolicyMode::Random,
        }
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions { greedy: self.greedy_loss, lookahead: self.lookahead, stop_target: self.stop_lookahead_target }
    }
}

/// Per-epoch training record. Loss terms are means per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_sm: f64,
    pub train_rl: f64,
    pub train_la: f64,
    pub val_acc: f64,
    /// Mean look-ahead cosine distance per predicted step on validation.
    pub val_la: f64,
    pub best_val_acc: f64,
    pub seconds: f64,
}

pub const HISTORY_HEADER: [&str; 8] =
    ["epoch", "train_SM", "train_RL_surrogate", "train_LA", "val_acc@T", "seconds", "val_LA", "best_val_acc"];

pub fn write_history<W: Write>(out: W, history: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record(&[
            r.epoch.to_string(),
            r.train_sm.to_string(),
            r.train_rl.to_string(),
            r.train_la.to_string(),
            r.val_acc.to_string(),
            format!("{:.3}", r.seconds),
            r.val_la.to_string(),
            r.best_val_acc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy and look-ahead error of an agent on a split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScore {
    /// Accuracy of head `t` at step `t`, for `t = 1..=T`.
    pub step_acc: Vec<f64>,
    /// Accuracy of the averaged class probabilities over all heads.
    pub avg_acc: f64,
    pub lookahead_err: f64,
}

impl SplitScore {
    pub fn final_acc(&self) -> f64 {
        *self.step_acc.last().expect("at least one step")
    }
}

/// Scores every instance once; instance `i` uses `eval_stream.fork(i)`.
pub fn score_split(
    params: &AgentParams,
    cfg: &AgentConfig,
    ds: &Dataset,
    mode: &PolicyMode,
    eval_stream: &Stream,
) -> Result<SplitScore, TrainError> {
    let steps = cfg.steps;
    let mut hits = vec![0usize; steps];
    let mut avg_hits = 0usize;
    let (mut la_sum, mut la_n) = (0.0, 0usize);
    let mut tape = Tape::new();
    for (i, inst) in ds.instances.iter().enumerate() {
        tape.reset();
        let mut rng = eval_stream.fork(i as u64);
        let r = rollout(&mut tape, inst, params, cfg, &mut rng, mode)?;
        let traj = &r.trajectory;
        for (t, h) in hits.iter_mut().enumerate() {
            *h += usize::from(traj.predicted(t + 1) == inst.label);
        }
        let mut avg = vec![0.0; cfg.classes];
        for lp in &traj.class_log_probs {
            for (a, l) in avg.iter_mut().zip(lp) {
                *a += l.exp();
            }
        }
        avg_hits += usize::from(crate::agent::argmax(&avg) == inst.label);
        for (k, pred) in traj.predictions.iter().enumerate() {
            la_sum += cosine_distance(pred, &traj.aggregates[k + 1]);
            la_n += 1;
        }
    }
    let n = ds.len().max(1) as f64;
    Ok(SplitScore {
        step_acc: hits.iter().map(|&h| h as f64 / n).collect(),
        avg_acc: avg_hits as f64 / n,
        lookahead_err: if la_n == 0 { 0.0 } else { la_sum / la_n as f64 },
    })
}

/// Counters and streams needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub episodes: u64,
    pub shuffle: StreamState,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub since_best: usize,
    pub stopped: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: AgentConfig,
    pub best: AgentParams,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub history: Vec<EpochRecord>,
    pub last: Checkpoint,
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    agent: AgentConfig,
    params: AgentParams,
    best: AgentParams,
    state: TrainState,
    reward: RewardSpec,
    train: &'a Dataset,
    val: &'a Dataset,
    history: Vec<EpochRecord>,
}

fn check_splits(train: &Dataset, val: &Dataset, agent: &AgentConfig) -> Result<(), TrainError> {
    if train.meta != val.meta {
        return Err(TrainError::Config("train and validation splits have different metadata".into()));
    }
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config("empty training or validation split".into()));
    }
    agent.check_dataset(&train.meta)?;
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(train: &'a Dataset, val: &'a Dataset, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let agent = cfg.agent_config(train);
        check_splits(train, val, &agent)?;
        let params = AgentParams::init(&agent, &mut Stream::new(cfg.seed, "init"))?;
        let state = TrainState {
            epoch: 0,
            episodes: 0,
            shuffle: Stream::new(cfg.seed, "train-shuffle").state(),
            best_val_acc: f64::NEG_INFINITY,
            best_epoch: 0,
            since_best: 0,
            stopped: false,
        };
        let reward = RewardSpec { modal_class: train.modal_class(), baseline: cfg.reward_baseline };
        Ok(Trainer { best: params.clone(), cfg, agent, params, state, reward, train, val, history: Vec::new() })
    }

    /// Continues from the `last` checkpoint of an earlier run; `best` holds
    /// that run's best-so-far parameters.
    pub fn resume(
        train: &'a Dataset,
        val: &'a Dataset,
        last: Checkpoint,
        best: Checkpoint,
    ) -> Result<Self, TrainError> {
        let state = last.state.ok_or_else(|| TrainError::Checkpoint("checkpoint carries no training state".into()))?;
        if best.agent != last.agent {
            return Err(TrainError::Checkpoint("best and last checkpoints disagree on the agent layout".into()));
        }
        last.train.validate()?;
        check_splits(train, val, &last.agent)?;
        let reward = RewardSpec { modal_class: train.modal_class(), baseline: last.train.reward_baseline };
        Ok(Trainer {
            cfg: last.train,
            agent: last.agent,
            params: last.params,
            best: best.params,
            state,
            reward,
            train,
            val,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn finished(&self) -> bool {
        self.state.stopped || self.state.epoch >= self.cfg.epochs
    }

    pub fn last_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            agent: self.agent.clone(),
            train: self.cfg.clone(),
            state: Some(self.state.clone()),
            params: self.params.clone(),
        }
    }

    pub fn best_checkpoint(&self) -> Checkpoint {
        Checkpoint { agent: self.agent.clone(), train: self.cfg.clone(), state: None, params: self.best.clone() }
    }

    /// One pass over the training split followed by validation.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord, TrainError> {
        let started = Instant::now();
        let epoch = self.state.epoch + 1;
        let mut shuffle = Stream::from_state(&self.state.shuffle);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        shuffle.shuffle(&mut order);
        self.state.shuffle = shuffle.state();

        let rollout_stream = Stream::new(self.cfg.seed, "rollout");
        let mode = self.cfg.rollout_mode();
        let opts = self.cfg.loss_options();
        let mut bundle = GradBundle::zeros(&self.params, self.cfg.lambda);
        let mut tape = Tape::new();
        let (mut sm_sum, mut rl_sum, mut la_sum) = (0.0, 0.0, 0.0);

        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            bundle.clear();
            for &i in batch {
                let inst = &self.train.instances[i];
                let mut rng = rollout_stream.fork(self.state.episodes);
                self.state.episodes += 1;
                tape.reset();
                let r = rollout(&mut tape, inst, &self.params, &self.agent, &mut rng, &mode)?;
                let l = episode_losses(&mut tape, &r, inst.label, &self.reward, opts)?;
                for (what, v) in [("softmax", l.softmax_value), ("reinforce", l.reinforce_value), ("lookahead", l.lookahead_value)] {
                    if !v.is_finite() {
                        return Err(TrainError::Diverged { epoch, batch: b + 1, what: what.into() });
                    }
                }
                sm_sum += l.softmax_value;
                rl_sum += l.reinforce_value;
                la_sum += l.lookahead_value;
                tape.backward(l.softmax, bundle.softmax.as_mut().expect("allocated"))?;
                if let Some(v) = l.reinforce {
                    tape.backward(v, bundle.reinforce.as_mut().expect("allocated"))?;
                }
                if let Some(v) = l.lookahead {
                    tape.backward(v, bundle.lookahead.as_mut().expect("allocated"))?;
                }
            }
            let total = apply_composition(&bundle, &self.params)?;
            if !total.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: b + 1, what: "gradient".into() });
            }
            if self.cfg.learning_rate > 0.0 {
                let scale = 1.0 / batch.len() as f64;
                let ids: Vec<_> = self.params.store.ids().collect();
                for id in ids {
                    let g = self.params.store.block_mut(id).grad.data_mut();
                    for (d, s) in g.iter_mut().zip(total.get(id)) {
                        *d = s * scale;
                    }
                }
                sgd_update(&mut self.params.store, self.cfg.learning_rate)?;
                if self.params.store.blocks().iter().any(|p| !p.value.is_finite()) {
                    return Err(TrainError::Diverged { epoch, batch: b + 1, what: "parameters".into() });
                }
            }
        }

        let eval_stream = Stream::new(self.cfg.seed, "eval");
        let score = score_split(&self.params, &self.agent, self.val, &self.cfg.eval_mode(), &eval_stream)?;
        let val_acc = score.final_acc();
        if val_acc > self.state.best_val_acc {
            self.state.best_val_acc = val_acc;
            self.state.best_epoch = epoch;
            self.state.since_best = 0;
            self.best = self.params.clone();
        } else {
            self.state.since_best += 1;
            if self.state.since_best >= self.cfg.patience {
                self.state.stopped = true;
            }
        }
        self.state.epoch = epoch;
        let n = self.train.len() as f64;
        self.history.push(EpochRecord {
            epoch,
            train_sm: sm_sum / n,
            train_rl: rl_sum / n,
            train_la: la_sum / n,
            val_acc,
            val_la: score.lookahead_err,
            best_val_acc: self.state.best_val_acc,
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(self.history.last().expect("just pushed"))
    }

    pub fn run(mut self) -> Result<TrainOutcome, TrainError> {
        while !self.finished() {
            self.run_epoch()?;
        }
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        let last = self.last_checkpoint();
        TrainOutcome {
            agent: self.agent,
            best: self.best,
            best_epoch: self.state.best_epoch,
            best_val_acc: self.state.best_val_acc,
            history: self.history,
            last,
        }
    }
}

/// Trains with early stopping and returns the best-on-validation parameters.
pub fn train(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    Trainer::new(train, val, cfg.clone())?.run()
}
