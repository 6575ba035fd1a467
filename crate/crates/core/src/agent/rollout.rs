use serde::{Deserialize, Serialize};

use super::modules::{
    actor_forward, aggregator_forward, classifier_forward, lookahead_forward, sample_policy,
    sensor_forward,
};
use super::{AgentConfig, AgentError, AgentParams};
use crate::envgrid::{apply_motion, init_pose, Motion, Pose, ViewGridInstance};
use crate::ndgrad::{Tape, Var};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    /// Sample each motion from the actor's policy.
    Learned,
    /// Take the actor's most probable motion (lowest index on ties).
    Greedy,
    /// Uniform over the motion set; the actor is not run.
    Random,
    /// A given sequence of action indices; the actor is not run.
    Fixed(Vec<usize>),
}

impl PolicyMode {
    pub fn uses_actor(&self) -> bool {
        matches!(self, PolicyMode::Learned | PolicyMode::Greedy)
    }
}

/// Everything observed and computed during one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: usize,
    /// `p_0 ..= p_T`.
    pub poses: Vec<Pose>,
    pub motions: Vec<Motion>,
    pub actions: Vec<usize>,
    pub policies: Vec<Vec<f64>>,
    pub views: Vec<Vec<f64>>,
    pub sensed: Vec<Vec<f64>>,
    pub aggregates: Vec<Vec<f64>>,
    /// Look-ahead predictions for steps `2 ..= T`.
    pub predictions: Vec<Vec<f64>>,
    pub class_log_probs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    /// Predicted class at step `t` (1-based); ties to the lowest index.
    pub fn predicted(&self, t: usize) -> usize {
        argmax(&self.class_log_probs[t - 1])
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Tape handles for building losses over a rollout.
#[derive(Clone, Debug)]
pub struct RolloutVars {
    /// `log pi_t[chosen_t]`, present only when the actor chose the motions.
    pub chosen_log_probs: Vec<Var>,
    pub class_log_probs: Vec<Var>,
    pub aggregates: Vec<Var>,
    pub predictions: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub vars: RolloutVars,
}

/// Runs one `cfg.steps`-long episode on `tape`.
///
/// Step `t`: choose `m_t` from `a_{t-1}` and the proprioception of
/// `p_{t-1}`, move, observe `x_t`, sense `(x_t, m_t)`, aggregate into `a_t`,
/// classify with head `t`, and for `t >= 2` predict `a_t` from
/// `(a_{t-1}, m_t, proprio(p_{t-1}))`.
pub fn rollout(
    tape: &mut Tape,
    inst: &ViewGridInstance,
    params: &AgentParams,
    cfg: &AgentConfig,
    rng: &mut Stream,
    mode: &PolicyMode,
) -> Result<Rollout, AgentError> {
    let start = init_pose(cfg.grid, rng);
    rollout_from(tape, inst, params, cfg, rng, mode, start, cfg.steps)
}

/// As [`rollout`], from a given start pose and for `steps <= cfg.steps`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_from(
    tape: &mut Tape,
    inst: &ViewGridInstance,
    params: &AgentParams,
    cfg: &AgentConfig,
    rng: &mut Stream,
    mode: &PolicyMode,
    start: Pose,
    steps: usize,
) -> Result<Rollout, AgentError> {
    if steps == 0 || steps > cfg.steps {
        return Err(AgentError::StepOutOfRange { step: steps, steps: cfg.steps });
    }
    if inst.dims() != cfg.grid || inst.feature_dim() != cfg.feature_dim {
        return Err(AgentError::Config("instance does not match agent configuration".into()));
    }
    if let PolicyMode::Fixed(seq) = mode {
        if seq.len() < steps {
            return Err(AgentError::Config(format!("fixed sequence has {} actions for {steps} steps", seq.len())));
        }
    }
    let set = cfg.motion_set();
    let n_actions = set.len();

    let mut traj = Trajectory {
        label: inst.label,
        poses: vec![start],
        motions: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        policies: Vec::with_capacity(steps),
        views: Vec::with_capacity(steps),
        sensed: Vec::with_capacity(steps),
        aggregates: Vec::with_capacity(steps),
        predictions: Vec::new(),
        class_log_probs: Vec::with_capacity(steps),
    };
    let mut vars = RolloutVars {
        chosen_log_probs: Vec::new(),
        class_log_probs: Vec::new(),
        aggregates: Vec::new(),
        predictions: Vec::new(),
    };

    let mut prev = tape.input(vec![0.0; cfg.aggregate_dim]);
    let mut pose = start;
    for t in 1..=steps {
        let proprio_prev = tape.input(cfg.encode_proprio(pose));
        let (action, policy) = match mode {
            PolicyMode::Learned | PolicyMode::Greedy => {
                let log_pi = actor_forward(tape, params, prev, proprio_prev)?;
                let (pi, sampled) = sample_policy(tape.value(log_pi), rng);
                let action = if matches!(mode, PolicyMode::Greedy) { argmax(&pi) } else { sampled };
                vars.chosen_log_probs.push(tape.pick(log_pi, action));
                (action, pi)
            }
            PolicyMode::Random => (set.sample(rng), vec![1.0 / n_actions as f64; n_actions]),
            PolicyMode::Fixed(seq) => {
                let a = seq[t - 1];
                if a >= n_actions {
                    return Err(AgentError::Config(format!("action index {a} outside motion set")));
                }
                (a, vec![1.0 / n_actions as f64; n_actions])
            }
        };
        let motion = set.get(action);
        let next = apply_motion(pose, motion, &set, cfg.grid)?;
        let view = inst.observe_f64(next)?;

        let enc = tape.input(cfg.encode_motion(&set, action));
        let x = tape.input(view.clone());
        let s = sensor_forward(tape, params, x, enc)?;
        let a = aggregator_forward(tape, params, prev, s)?;
        let y = classifier_forward(tape, params, a, t)?;
        if t >= 2 {
            let pred = lookahead_forward(tape, params, prev, enc, proprio_prev)?;
            traj.predictions.push(tape.value(pred).to_vec());
            vars.predictions.push(pred);
        }

        traj.motions.push(motion);
        traj.actions.push(action);
        traj.policies.push(policy);
        traj.views.push(view);
        traj.sensed.push(tape.value(s).to_vec());
        traj.aggregates.push(tape.value(a).to_vec());
        traj.class_log_probs.push(tape.value(y).to_vec());
        traj.poses.push(next);
        vars.class_log_probs.push(y);
        vars.aggregates.push(a);

        prev = a;
        pose = next;
    }
    Ok(Rollout { trajectory: traj, vars })
}
