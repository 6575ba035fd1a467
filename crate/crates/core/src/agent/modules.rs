//! Parameter layout and forward passes of the five agent modules.

use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentError};
use crate::ndgrad::{Activation, ElmanCell, Linear, NdError, ParamId, ParamStore, Tape, Var};
use crate::rng::Stream;

/// The weight group a parameter block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Module {
    Sensor,
    Aggregator,
    Actor,
    Classifier,
    Lookahead,
}

impl Module {
    pub const ALL: [Module; 5] =
        [Module::Sensor, Module::Aggregator, Module::Actor, Module::Classifier, Module::Lookahead];

    pub fn name(self) -> &'static str {
        match self {
            Module::Sensor => "sensor",
            Module::Aggregator => "aggregator",
            Module::Actor => "actor",
            Module::Classifier => "classifier",
            Module::Lookahead => "lookahead",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sensor {
    pub view: Linear,
    pub motion: Linear,
    pub merge: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoLayer {
    pub hidden: Linear,
    pub out: Linear,
}

impl TwoLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut Stream,
    ) -> Result<Self, NdError> {
        Ok(TwoLayer {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, rng)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, output, rng)?,
        })
    }

    /// `out(tanh(hidden(x)))`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, NdError> {
        let h = self.hidden.forward_act(tape, store, x, Activation::Tanh)?;
        self.out.forward(tape, store, h)
    }

    pub fn params(&self) -> [ParamId; 4] {
        let [a, b] = self.hidden.params();
        let [c, d] = self.out.params();
        [a, b, c, d]
    }
}

/// All trainable weights, with the module each block belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub store: ParamStore,
    pub sensor: Sensor,
    pub aggregator: ElmanCell,
    pub actor: TwoLayer,
    pub classifiers: Vec<TwoLayer>,
    pub lookahead: TwoLayer,
    modules: Vec<Module>,
}

impl AgentParams {
    /// Uniform(+-1/sqrt(fan_in)) weights and zero biases, drawn in module order.
    pub fn init(cfg: &AgentConfig, rng: &mut Stream) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut modules = Vec::new();
        let mut tag = |store: &ParamStore, m: Module| modules.resize(store.len(), m);

        let (d, hs, ha, hid) = (cfg.feature_dim, cfg.sensor_dim, cfg.aggregate_dim, cfg.hidden_dim);
        let sensor = Sensor {
            view: Linear::new(&mut store, "sensor.view", d, hs, rng)?,
            motion: Linear::new(&mut store, "sensor.motion", cfg.motion_encoding_dim(), hs, rng)?,
            merge: Linear::new(&mut store, "sensor.merge", 2 * hs, hs, rng)?,
        };
        tag(&store, Module::Sensor);
        let aggregator = ElmanCell::new(&mut store, "aggregator", hs, ha, rng)?;
        tag(&store, Module::Aggregator);
        let actor = TwoLayer::new(&mut store, "actor", ha + cfg.proprio_dim(), hid, cfg.num_actions(), rng)?;
        tag(&store, Module::Actor);
        let classifiers = (0..cfg.steps)
            .map(|t| TwoLayer::new(&mut store, &format!("classifier{}", t + 1), ha, hid, cfg.classes, rng))
            .collect::<Result<Vec<_>, _>>()?;
        tag(&store, Module::Classifier);
        let la_in = ha + cfg.motion_encoding_dim() + cfg.proprio_dim();
        let lookahead = TwoLayer::new(&mut store, "lookahead", la_in, hid, ha, rng)?;
        tag(&store, Module::Lookahead);

        Ok(AgentParams { store, sensor, aggregator, actor, classifiers, lookahead, modules })
    }

    pub fn module_of(&self, id: ParamId) -> Module {
        self.modules[id.0]
    }

    pub fn blocks_of(&self, m: Module) -> Vec<ParamId> {
        self.store.ids().filter(|&id| self.module_of(id) == m).collect()
    }

    /// Checks the module table against the layout after deserialization.
    pub fn validate_layout(&self) -> Result<(), AgentError> {
        if self.modules.len() != self.store.len() {
            return Err(AgentError::Config("module table does not cover every parameter block".into()));
        }
        let mut expect = Vec::new();
        expect.extend(self.sensor.view.params().map(|p| (p, Module::Sensor)));
        expect.extend(self.sensor.motion.params().map(|p| (p, Module::Sensor)));
        expect.extend(self.sensor.merge.params().map(|p| (p, Module::Sensor)));
        expect.extend(self.aggregator.params().map(|p| (p, Module::Aggregator)));
        expect.extend(self.actor.params().map(|p| (p, Module::Actor)));
        for c in &self.classifiers {
            expect.extend(c.params().map(|p| (p, Module::Classifier)));
        }
        expect.extend(self.lookahead.params().map(|p| (p, Module::Lookahead)));
        if expect.len() != self.store.len() {
            return Err(AgentError::Config("parameter blocks outside the module layout".into()));
        }
        for (id, m) in expect {
            if self.module_of(id) != m {
                return Err(AgentError::Config(format!("block {} tagged {:?}", self.store.block(id).id, m)));
            }
        }
        Ok(())
    }

    pub fn reindex(&mut self) {
        self.store.reindex();
    }
}

/// View and motion through separate affine+tanh pipelines, concatenated,
/// then one merging affine+tanh layer.
pub fn sensor_forward(
    tape: &mut Tape,
    params: &AgentParams,
    view: Var,
    motion: Var,
) -> Result<Var, NdError> {
    let s = &params.sensor;
    let hv = s.view.forward_act(tape, &params.store, view, Activation::Tanh)?;
    let hm = s.motion.forward_act(tape, &params.store, motion, Activation::Tanh)?;
    let cat = tape.concat(&[hv, hm]);
    s.merge.forward_act(tape, &params.store, cat, Activation::Tanh)
}

pub fn aggregator_forward(
    tape: &mut Tape,
    params: &AgentParams,
    prev: Var,
    sensed: Var,
) -> Result<Var, NdError> {
    crate::ndgrad::rnn_step(tape, &params.store, &params.aggregator, prev, sensed)
}

/// Log-policy over the motion set.
pub fn actor_forward(
    tape: &mut Tape,
    params: &AgentParams,
    aggregate: Var,
    proprio: Var,
) -> Result<Var, NdError> {
    let x = tape.concat(&[aggregate, proprio]);
    let logits = params.actor.forward(tape, &params.store, x)?;
    Ok(tape.log_softmax(logits))
}

/// Head `step` (1-based) of the classifier bank; class log-probabilities.
pub fn classifier_forward(
    tape: &mut Tape,
    params: &AgentParams,
    aggregate: Var,
    step: usize,
) -> Result<Var, AgentError> {
    if step == 0 || step > params.classifiers.len() {
        return Err(AgentError::StepOutOfRange { step, steps: params.classifiers.len() });
    }
    let logits = params.classifiers[step - 1].forward(tape, &params.store, aggregate)?;
    Ok(tape.log_softmax(logits))
}

pub fn lookahead_forward(
    tape: &mut Tape,
    params: &AgentParams,
    prev_aggregate: Var,
    motion: Var,
    proprio: Var,
) -> Result<Var, NdError> {
    let x = tape.concat(&[prev_aggregate, motion, proprio]);
    params.lookahead.forward(tape, &params.store, x)
}

/// Exponentiated log-policy and one inverse-CDF draw from it.
pub fn sample_policy(log_pi: &[f64], rng: &mut Stream) -> (Vec<f64>, usize) {
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let idx = rng.categorical(&pi);
    (pi, idx)
}
