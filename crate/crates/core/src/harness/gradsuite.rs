//! Finite-difference checks over randomly drawn layer, module and
//! episode-loss configurations.

use serde::Serialize;

use crate::agent::{
    actor_forward, aggregator_forward, classifier_forward, lookahead_forward, rollout, sensor_forward, AgentConfig,
    AgentParams, PolicyMode, Proprio,
};
use crate::envgrid::{GridDims, ViewGridInstance};
use crate::ndgrad::{grad_check, rnn_step, Activation, ElmanCell, Linear, NdError, ParamStore, Tape, Var};
use crate::rng::Stream;
use crate::train::{episode_losses, reinforce_surrogate, LossOptions, RewardSpec};

pub const DEFAULT_CONFIGS: usize = 20;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

pub const CASES: [&str; 15] = [
    "linear",
    "tanh",
    "relu",
    "log-softmax",
    "cosine",
    "concat-pick",
    "elman",
    "sensor",
    "aggregator",
    "actor",
    "classifier",
    "lookahead",
    "episode-softmax",
    "episode-lookahead",
    "episode-reinforce",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseResult {
    pub case: String,
    pub configs: usize,
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

fn dim(rng: &mut Stream, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn input(tape: &mut Tape, rng: &mut Stream, n: usize) -> Var {
    let v = (0..n).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
    tape.input(v)
}

fn randomize(store: &mut ParamStore, rng: &mut Stream) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.value_mut(id).data_mut() {
            *v = rng.uniform_range(-0.9, 0.9);
        }
    }
}

/// Reduces a vector output to a scalar with fixed random weights.
fn project(tape: &mut Tape, rng: &mut Stream, y: Var) -> Result<Var, NdError> {
    let n = tape.value(y).len();
    let w = input(tape, rng, n);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn agent_config(rng: &mut Stream, min_steps: usize) -> AgentConfig {
    let elevations = dim(rng, 1, 3);
    let azimuths = dim(rng, 3, 6);
    let turntable = elevations == 1;
    AgentConfig {
        feature_dim: dim(rng, 2, 5),
        sensor_dim: dim(rng, 2, 5),
        aggregate_dim: dim(rng, 2, 5),
        hidden_dim: dim(rng, 2, 5),
        classes: dim(rng, 2, 4),
        steps: dim(rng, min_steps, 4),
        grid: GridDims { elevations, azimuths },
        motion_window: if turntable { (1, 3) } else { (3, 3) },
        proprio: if turntable { Proprio::Azimuth } else { Proprio::Elevation },
    }
}

fn agent(cfg: &AgentConfig, rng: &mut Stream) -> AgentParams {
    let mut p = AgentParams::init(cfg, rng).expect("valid config");
    randomize(&mut p.store, rng);
    p
}

fn instance(cfg: &AgentConfig, rng: &mut Stream) -> ViewGridInstance {
    let n = cfg.grid.cells() * cfg.feature_dim;
    let f = (0..n).map(|_| rng.uniform_range(-1.0, 1.0) as f32).collect();
    ViewGridInstance::new(rng.below(cfg.classes), cfg.grid, cfg.feature_dim, f).expect("sized")
}

fn nd(e: impl std::fmt::Display) -> NdError {
    NdError::Shape(e.to_string())
}

type Model = Box<dyn FnMut(&mut Tape, &ParamStore) -> Result<Var, NdError>>;

/// Wraps a forward pass over agent parameters as a model of the raw store.
fn over_agent(
    template: AgentParams,
    mut f: impl FnMut(&mut Tape, &AgentParams) -> Result<Var, NdError> + 'static,
) -> Model {
    Box::new(move |tape, store| {
        let mut q = template.clone();
        q.store = store.clone();
        f(tape, &q)
    })
}

/// Builds case `name` for one random configuration. Inputs are redrawn
/// from a cloned stream on every evaluation, so each evaluation sees the
/// same data.
fn build(name: &str, rng: &mut Stream) -> (ParamStore, Model) {
    let data = rng.fork(0);
    let mut store = ParamStore::new();
    match name {
        "linear" | "tanh" | "relu" | "log-softmax" => {
            let (i, o) = (dim(rng, 1, 6), dim(rng, 1, 6));
            let l = Linear::new(&mut store, "l", i, o, rng).expect("fresh store");
            randomize(&mut store, rng);
            let name = name.to_string();
            let model: Model = Box::new(move |tape, store| {
                let mut d = data.clone();
                let x = input(tape, &mut d, i);
                let y = l.forward(tape, store, x)?;
                let y = match name.as_str() {
                    "tanh" => tape.activation(y, Activation::Tanh),
                    "relu" => tape.activation(y, Activation::Relu),
                    "log-softmax" => tape.log_softmax(y),
                    _ => y,
                };
                project(tape, &mut d, y)
            });
            (store, model)
        }
        "cosine" => {
            let (i, o) = (dim(rng, 1, 6), dim(rng, 1, 6));
            let a = Linear::new(&mut store, "a", i, o, rng).expect("fresh store");
            let b = Linear::new(&mut store, "b", i, o, rng).expect("fresh store");
            randomize(&mut store, rng);
            let model: Model = Box::new(move |tape, store| {
                let mut d = data.clone();
                let x = input(tape, &mut d, i);
                let u = a.forward(tape, store, x)?;
                let v = b.forward(tape, store, x)?;
                tape.cosine_distance(u, v)
            });
            (store, model)
        }
        "concat-pick" => {
            let (i, o1, o2) = (dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 5));
            let a = Linear::new(&mut store, "a", i, o1, rng).expect("fresh store");
            let b = Linear::new(&mut store, "b", i, o2, rng).expect("fresh store");
            randomize(&mut store, rng);
            let k = rng.below(o1 + o2);
            let model: Model = Box::new(move |tape, store| {
                let mut d = data.clone();
                let x = input(tape, &mut d, i);
                let u = a.forward(tape, store, x)?;
                let v = b.forward(tape, store, x)?;
                let c = tape.concat(&[u, v]);
                let c = tape.tanh(c);
                let p = tape.pick(c, k);
                let s = project(tape, &mut d, c)?;
                tape.add(p, s)
            });
            (store, model)
        }
        "elman" => {
            let (i, h, steps) = (dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 4));
            let cell = ElmanCell::new(&mut store, "rnn", i, h, rng).expect("fresh store");
            randomize(&mut store, rng);
            let model: Model = Box::new(move |tape, store| {
                let mut d = data.clone();
                let mut state = tape.input(vec![0.0; h]);
                for _ in 0..steps {
                    let x = input(tape, &mut d, i);
                    state = rnn_step(tape, store, &cell, state, x)?;
                }
                project(tape, &mut d, state)
            });
            (store, model)
        }
        "sensor" | "aggregator" | "actor" | "classifier" | "lookahead" => {
            let cfg = agent_config(rng, 1);
            let p = agent(&cfg, rng);
            let store = p.store.clone();
            let name = name.to_string();
            let head = dim(rng, 1, cfg.steps);
            let action = rng.below(cfg.num_actions());
            let model = over_agent(p, move |tape, p| {
                let mut d = data.clone();
                let set = cfg.motion_set();
                let enc = tape.input(cfg.encode_motion(&set, action));
                let agg = input(tape, &mut d, cfg.aggregate_dim);
                let pr = input(tape, &mut d, cfg.proprio_dim());
                let y = match name.as_str() {
                    "sensor" => {
                        let v = input(tape, &mut d, cfg.feature_dim);
                        sensor_forward(tape, p, v, enc)?
                    }
                    "aggregator" => {
                        let s = input(tape, &mut d, cfg.sensor_dim);
                        let a1 = aggregator_forward(tape, p, agg, s)?;
                        let s2 = input(tape, &mut d, cfg.sensor_dim);
                        aggregator_forward(tape, p, a1, s2)?
                    }
                    "actor" => {
                        let lp = actor_forward(tape, p, agg, pr)?;
                        return Ok(tape.pick(lp, action));
                    }
                    "classifier" => classifier_forward(tape, p, agg, head).map_err(nd)?,
                    _ => {
                        let pred = lookahead_forward(tape, p, agg, enc, pr)?;
                        let target = input(tape, &mut d, cfg.aggregate_dim);
                        return tape.cosine_distance(pred, target);
                    }
                };
                project(tape, &mut d, y)
            });
            (store, model)
        }
        "episode-softmax" | "episode-lookahead" => {
            let lookahead = name == "episode-lookahead";
            let cfg = agent_config(rng, if lookahead { 2 } else { 1 });
            let p = agent(&cfg, rng);
            let store = p.store.clone();
            let inst = instance(&cfg, rng);
            // A detached target is not a true gradient, so only the full loss is checked.
            let opts = LossOptions { greedy: rng.below(2) == 0, lookahead, stop_target: false };
            let spec = RewardSpec::new(0);
            let actions: Vec<usize> = (0..cfg.steps).map(|_| rng.below(cfg.num_actions())).collect();
            let model = over_agent(p, move |tape, p| {
                let mut d = data.clone();
                let mode = PolicyMode::Fixed(actions.clone());
                let r = rollout(tape, &inst, p, &cfg, &mut d, &mode).map_err(nd)?;
                let l = episode_losses(tape, &r, inst.label, &spec, opts)?;
                Ok(if lookahead { l.lookahead.expect("T >= 2") } else { l.softmax })
            });
            (store, model)
        }
        "episode-reinforce" => {
            // The reward is held at its value under the unperturbed parameters,
            // as the estimator treats it.
            let cfg = agent_config(rng, 1);
            let p = agent(&cfg, rng);
            let store = p.store.clone();
            let inst = instance(&cfg, rng);
            let spec = RewardSpec::new(rng.below(cfg.classes));
            let mut tape = Tape::new();
            let r = rollout(&mut tape, &inst, &p, &cfg, &mut data.clone(), &PolicyMode::Learned).expect("rollout");
            let reward = spec.reward(r.trajectory.class_log_probs.last().expect("T >= 1"), inst.label);
            let reward = if reward == 0.0 { 1.0 } else { reward };
            let model = over_agent(p, move |tape, p| {
                let mut d = data.clone();
                let r = rollout(tape, &inst, p, &cfg, &mut d, &PolicyMode::Learned).map_err(nd)?;
                Ok(reinforce_surrogate(tape, &r.vars.chosen_log_probs, reward).expect("actor ran"))
            });
            (store, model)
        }
        other => panic!("unknown gradient case {other}"),
    }
}

/// Checks `configs` random configurations of one case.
pub fn check_case(name: &str, configs: usize, tolerance: f64, seed: u64) -> Result<CaseResult, NdError> {
    let base = Stream::new(seed, "gradsuite");
    let case_index = CASES.iter().position(|c| *c == name).ok_or_else(|| nd(format!("unknown case {name}")))?;
    let mut out = CaseResult { case: name.into(), configs, coordinates: 0, max_rel_err: 0.0, passed: true };
    for k in 0..configs {
        let mut rng = base.fork((case_index * 1_000_000 + k) as u64);
        let (mut store, model) = build(name, &mut rng);
        let r = grad_check(model, &mut store, tolerance, &mut rng)?;
        out.coordinates += r.coordinates;
        out.max_rel_err = out.max_rel_err.max(r.max_rel_err);
        out.passed &= r.passed();
    }
    Ok(out)
}

pub fn run_suite(configs: usize, tolerance: f64, seed: u64) -> Result<Vec<CaseResult>, NdError> {
    CASES.iter().map(|c| check_case(c, configs, tolerance, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes_on_a_few_configs() {
        for c in CASES {
            let r = check_case(c, 3, DEFAULT_TOLERANCE, 9).unwrap();
            assert!(r.passed && r.coordinates > 0, "{r:?}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        // d/dx of x*x computed as if the second factor were constant.
        let mut store = ParamStore::new();
        let id = store.insert("x", crate::ndgrad::DenseArray::vector(vec![0.7])).unwrap();
        let r = grad_check(
            move |tape: &mut Tape, s: &ParamStore| {
                let x = tape.param(s, id);
                let c = tape.detach(x);
                tape.mul(x, c)
            },
            &mut store,
            DEFAULT_TOLERANCE,
            &mut Stream::new(0, "coords"),
        )
        .unwrap();
        assert!(!r.passed());
    }
}
