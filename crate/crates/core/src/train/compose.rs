use super::TrainError;
use crate::agent::{AgentParams, Module};
use crate::ndgrad::GradBuffer;

/// Gradients accumulated separately per source.
#[derive(Clone, Debug)]
pub struct GradBundle {
    pub reinforce: Option<GradBuffer>,
    pub softmax: Option<GradBuffer>,
    pub lookahead: Option<GradBuffer>,
    pub lambda: f64,
}

impl GradBundle {
    pub fn zeros(params: &AgentParams, lambda: f64) -> Self {
        let z = params.store.grad_buffer();
        GradBundle { reinforce: Some(z.clone()), softmax: Some(z.clone()), lookahead: Some(z), lambda }
    }

    pub fn clear(&mut self) {
        for b in [&mut self.reinforce, &mut self.softmax, &mut self.lookahead].into_iter().flatten() {
            b.zero();
        }
    }
}

/// Per-module weighting of (reinforce, softmax, look-ahead) gradients.
pub fn source_weights(module: Module, lambda: f64) -> [f64; 3] {
    match module {
        Module::Actor => [1.0, 0.0, 0.0],
        Module::Sensor | Module::Aggregator => [1.0, 1.0, lambda],
        Module::Classifier => [1.0, 1.0, 0.0],
        Module::Lookahead => [0.0, 0.0, 1.0],
    }
}

/// Combines the tagged gradients block by block:
/// actor <- RL; sensor, aggregator <- RL + SM + lambda LA;
/// classifier <- RL + SM; look-ahead <- LA.
pub fn apply_composition(bundle: &GradBundle, params: &AgentParams) -> Result<GradBuffer, TrainError> {
    let missing = |tag: &str| TrainError::Composition(format!("missing {tag} accumulator"));
    let rl = bundle.reinforce.as_ref().ok_or_else(|| missing("reinforce"))?;
    let sm = bundle.softmax.as_ref().ok_or_else(|| missing("softmax"))?;
    let la = bundle.lookahead.as_ref().ok_or_else(|| missing("lookahead"))?;
    let n = params.store.len();
    if [rl, sm, la].iter().any(|b| b.num_blocks() != n) {
        return Err(TrainError::Composition("accumulator does not match the parameter layout".into()));
    }
    let mut out = params.store.grad_buffer();
    for id in params.store.ids() {
        let [wr, ws, wl] = source_weights(params.module_of(id), bundle.lambda);
        let dst = out.get_mut(id);
        for (src, w) in [(rl, wr), (sm, ws), (la, wl)] {
            if w != 0.0 {
                for (d, g) in dst.iter_mut().zip(src.get(id)) {
                    *d += w * g;
                }
            }
        }
    }
    Ok(out)
}
