use serde::{Deserialize, Serialize};

use crate::agent::{argmax, Rollout};
use crate::ndgrad::{NdError, Tape, Var};

/// Variance-reduced terminal reward: the correctness indicator of the final
/// prediction minus that of always answering the modal class `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub modal_class: usize,
    pub baseline: bool,
}

impl RewardSpec {
    pub fn new(modal_class: usize) -> Self {
        RewardSpec { modal_class, baseline: true }
    }

    pub fn reward(&self, final_log_probs: &[f64], label: usize) -> f64 {
        if self.baseline {
            compute_reward(final_log_probs, label, self.modal_class)
        } else {
            indicator(argmax(final_log_probs) == label)
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `R_c(y_hat) - R_c(z)`, in {-1, 0, 1}; argmax ties go to the lowest index.
pub fn compute_reward(final_log_probs: &[f64], label: usize, modal_class: usize) -> f64 {
    indicator(argmax(final_log_probs) == label) - indicator(modal_class == label)
}

/// `-reward * sum_t log pi_t[chosen_t]`; the reward is a constant.
pub fn reinforce_surrogate(tape: &mut Tape, chosen_log_probs: &[Var], reward: f64) -> Option<Var> {
    let (&first, rest) = chosen_log_probs.split_first()?;
    let mut total = first;
    for &v in rest {
        total = tape.add(total, v).expect("scalar log-probabilities");
    }
    Some(tape.scale(total, -reward))
}

/// Which loss terms an episode contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossOptions {
    /// Softmax loss at every step instead of only the last.
    pub greedy: bool,
    pub lookahead: bool,
    /// Treat the look-ahead target `a_t` as a constant.
    pub stop_target: bool,
}

#[derive(Clone, Debug)]
pub struct EpisodeLosses {
    pub softmax: Var,
    pub reinforce: Option<Var>,
    pub lookahead: Option<Var>,
    pub reward: f64,
    pub softmax_value: f64,
    pub reinforce_value: f64,
    pub lookahead_value: f64,
}

pub fn episode_losses(
    tape: &mut Tape,
    rollout: &Rollout,
    label: usize,
    reward: &RewardSpec,
    opts: LossOptions,
) -> Result<EpisodeLosses, NdError> {
    let vars = &rollout.vars;
    let steps = vars.class_log_probs.len();
    let heads: &[Var] = if opts.greedy { &vars.class_log_probs } else { &vars.class_log_probs[steps - 1..] };
    let mut softmax: Option<Var> = None;
    for &y in heads {
        let lp = tape.pick(y, label);
        let nll = tape.scale(lp, -1.0);
        softmax = Some(match softmax {
            None => nll,
            Some(acc) => tape.add(acc, nll)?,
        });
    }
    let softmax = softmax.expect("at least one step");

    let r = reward.reward(&rollout.trajectory.class_log_probs[steps - 1], label);
    let reinforce = reinforce_surrogate(tape, &vars.chosen_log_probs, r);

    let mut lookahead: Option<Var> = None;
    if opts.lookahead {
        for (k, &pred) in vars.predictions.iter().enumerate() {
            let target = vars.aggregates[k + 1];
            let target = if opts.stop_target { tape.detach(target) } else { target };
            let d = tape.cosine_distance(pred, target)?;
            lookahead = Some(match lookahead {
                None => d,
                Some(acc) => tape.add(acc, d)?,
            });
        }
    }
    Ok(EpisodeLosses {
        softmax_value: tape.scalar(softmax),
        reinforce_value: reinforce.map_or(0.0, |v| tape.scalar(v)),
        lookahead_value: lookahead.map_or(0.0, |v| tape.scalar(v)),
        softmax,
        reinforce,
        lookahead,
        reward: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_table() {
        let correct_is_1 = [-2.0, -0.1, -3.0];
        assert_eq!(compute_reward(&correct_is_1, 1, 0), 1.0);
        assert_eq!(compute_reward(&correct_is_1, 0, 0), -1.0);
        assert_eq!(compute_reward(&correct_is_1, 1, 1), 0.0);
        assert_eq!(compute_reward(&correct_is_1, 2, 0), 0.0);
        // tie between classes 0 and 2 resolves to 0
        assert_eq!(compute_reward(&[-1.0, -5.0, -1.0], 0, 1), 1.0);
    }

    #[test]
    fn surrogate_of_zero_reward_has_zero_gradient() {
        use crate::ndgrad::{DenseArray, ParamStore};
        let mut store = ParamStore::new();
        let id = store.insert("logits", DenseArray::vector(vec![0.3, -0.2])).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(&store, id);
        let lp = tape.log_softmax(p);
        let c = tape.pick(lp, 1);
        let s = reinforce_surrogate(&mut tape, &[c], 0.0).unwrap();
        tape.backward(s, &mut store).unwrap();
        assert!(store.grad(id).data().iter().all(|&g| g == 0.0));
        assert!(reinforce_surrogate(&mut tape, &[], 1.0).is_none());
    }
}
