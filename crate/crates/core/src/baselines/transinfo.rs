use serde::{Deserialize, Serialize};

use super::fusion::{entropy, seqdp_update, uniform_posterior};
use super::{BaselineError, PoseBank};
use crate::agent::argmax;
use crate::envgrid::{apply_motion, Dataset, GridDims, MotionSet, Pose, ViewGridInstance};
use crate::rng::Stream;

pub const DEFAULT_MC_SAMPLES: usize = 128;

/// How the next motion is chosen in a fusion episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Minimize the estimated expected posterior entropy.
    Entropy,
    Random,
}

/// Result of one episode of a classical method.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    /// Hypothesis after each view actually taken.
    pub predictions: Vec<usize>,
    pub poses: Vec<Pose>,
}

impl EpisodeOutcome {
    pub fn steps(&self) -> usize {
        self.predictions.len()
    }

    pub fn final_prediction(&self) -> usize {
        *self.predictions.last().expect("at least one view")
    }

    /// Hypothesis available at step `t`; after termination it stays fixed.
    pub fn prediction_at(&self, t: usize) -> usize {
        self.predictions[t.min(self.steps()) - 1]
    }
}

/// Greedy information-gain view selection over a trained pose bank.
///
/// Training instances are read in their own grid coordinates: a candidate
/// motion `m` from pose `p` is scored with every sampled instance's view at
/// `p + m`.
pub struct TransInfo<'a> {
    bank: &'a PoseBank,
    set: MotionSet,
    dims: GridDims,
    by_class: Vec<Vec<usize>>,
    /// `[instance][cell]` bank likelihood of every training view.
    lik: Vec<Vec<Vec<f64>>>,
    pub mc_samples: usize,
}

impl<'a> TransInfo<'a> {
    pub fn new(bank: &'a PoseBank, train: &Dataset, set: MotionSet, mc_samples: usize) -> Result<Self, BaselineError> {
        if mc_samples == 0 {
            return Err(BaselineError::Config("mc_samples must be positive".into()));
        }
        let dims = bank.dims();
        if train.meta.dims != dims || train.meta.classes != bank.classes() {
            return Err(BaselineError::Config("training split does not match the pose bank".into()));
        }
        let mut by_class = vec![Vec::new(); train.meta.classes];
        let mut lik = Vec::with_capacity(train.len());
        for (i, inst) in train.instances.iter().enumerate() {
            by_class[inst.label].push(i);
            let per_cell = (0..dims.cells())
                .map(|c| {
                    let p = dims.pose_of(c);
                    Ok(bank.likelihood(p, &inst.observe_f64(p)?))
                })
                .collect::<Result<Vec<_>, BaselineError>>()?;
            lik.push(per_cell);
        }
        Ok(TransInfo { bank, set, dims, by_class, lik, mc_samples })
    }

    pub fn motion_set(&self) -> &MotionSet {
        &self.set
    }

    /// Posterior restricted to classes with training instances, renormalized.
    fn sampling_weights(&self, posterior: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> =
            posterior.iter().zip(&self.by_class).map(|(&p, ids)| if ids.is_empty() { 0.0 } else { p }).collect();
        let z: f64 = w.iter().sum();
        if z > 0.0 {
            w.iter_mut().for_each(|v| *v /= z);
        } else {
            let n = self.by_class.iter().filter(|ids| !ids.is_empty()).count() as f64;
            for (v, ids) in w.iter_mut().zip(&self.by_class) {
                *v = if ids.is_empty() { 0.0 } else { 1.0 / n };
            }
        }
        w
    }

    fn entropy_after(&self, posterior: &[f64], instance: usize, q: Pose) -> f64 {
        entropy(&seqdp_update(posterior, &self.lik[instance][self.dims.cell_index(q)]))
    }

    /// Expected posterior entropy after viewing pose `q`, by enumerating every
    /// training instance.
    pub fn expected_entropy_exact(&self, posterior: &[f64], q: Pose) -> f64 {
        let w = self.sampling_weights(posterior);
        let mut total = 0.0;
        for (c, ids) in self.by_class.iter().enumerate() {
            if w[c] == 0.0 {
                continue;
            }
            let mean = ids.iter().map(|&i| self.entropy_after(posterior, i, q)).sum::<f64>() / ids.len() as f64;
            total += w[c] * mean;
        }
        total
    }

    /// Monte Carlo estimate from `n` sampled instances, with its standard error.
    pub fn expected_entropy_mc(&self, posterior: &[f64], q: Pose, n: usize, rng: &mut Stream) -> (f64, f64) {
        let w = self.sampling_weights(posterior);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let ids = &self.by_class[rng.categorical(&w)];
            let h = self.entropy_after(posterior, ids[rng.below(ids.len())], q);
            sum += h;
            sq += h * h;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sq / nf - mean * mean).max(0.0);
        (mean, (var / nf).sqrt())
    }

    /// Index of the motion with the lowest estimated entropy; ties go to the
    /// first in enumeration order.
    pub fn step(&self, posterior: &[f64], pose: Pose, rng: &mut Stream) -> Result<usize, BaselineError> {
        let mut best = (0, f64::INFINITY);
        for (k, &m) in self.set.members().iter().enumerate() {
            let q = apply_motion(pose, m, &self.set, self.dims)?;
            let (h, _) = self.expected_entropy_mc(posterior, q, self.mc_samples, rng);
            if h < best.1 {
                best = (k, h);
            }
        }
        Ok(best.0)
    }

    fn observe(&self, inst: &ViewGridInstance, p: Pose) -> Result<Vec<f64>, BaselineError> {
        Ok(self.bank.likelihood(p, &inst.observe_f64(p)?))
    }

    /// Per-view hypotheses; stops when two consecutive views agree.
    pub fn episode(&self, inst: &ViewGridInstance, start: Pose, t_max: usize, rng: &mut Stream) -> Result<EpisodeOutcome, BaselineError> {
        let mut pose = start;
        let mut lik = self.observe(inst, pose)?;
        let mut out = EpisodeOutcome { predictions: vec![argmax(&lik)], poses: vec![pose] };
        while out.steps() < t_max {
            let a = self.step(&lik, pose, rng)?;
            pose = apply_motion(pose, self.set.get(a), &self.set, self.dims)?;
            lik = self.observe(inst, pose)?;
            let h = argmax(&lik);
            let agree = out.final_prediction() == h;
            out.predictions.push(h);
            out.poses.push(pose);
            if agree {
                break;
            }
        }
        Ok(out)
    }

    /// Bayesian fusion of views. With `terminate`, stops once the posterior
    /// argmax is unchanged by a new view.
    pub fn fusion_episode(
        &self,
        inst: &ViewGridInstance,
        start: Pose,
        t_max: usize,
        selection: Selection,
        terminate: bool,
        rng: &mut Stream,
    ) -> Result<EpisodeOutcome, BaselineError> {
        let mut pose = start;
        let mut post = seqdp_update(&uniform_posterior(self.bank.classes()), &self.observe(inst, pose)?);
        let mut out = EpisodeOutcome { predictions: vec![argmax(&post)], poses: vec![pose] };
        while out.steps() < t_max {
            let a = match selection {
                Selection::Entropy => self.step(&post, pose, rng)?,
                Selection::Random => self.set.sample(rng),
            };
            pose = apply_motion(pose, self.set.get(a), &self.set, self.dims)?;
            post = seqdp_update(&post, &self.observe(inst, pose)?);
            let h = argmax(&post);
            let agree = out.final_prediction() == h;
            out.predictions.push(h);
            out.poses.push(pose);
            if terminate && agree {
                break;
            }
        }
        Ok(out)
    }
}
