use super::{BaselineError, MethodScore};
use crate::agent::{argmax, AgentConfig, TwoLayer};
use crate::envgrid::{apply_motion, init_pose, Dataset, MotionSet, Pose};
use crate::ndgrad::{sgd_update, Activation, Linear, ParamStore, Tape};
use crate::rng::Stream;
use crate::train::TrainConfig;

/// Pose-agnostic feed-forward classifier: the sensor's view pipeline
/// followed by one classifier head.
#[derive(Clone, Debug)]
pub struct SingleViewNet {
    pub store: ParamStore,
    pub view: Linear,
    pub head: TwoLayer,
}

impl SingleViewNet {
    pub fn init(feature_dim: usize, sensor_dim: usize, hidden_dim: usize, classes: usize, rng: &mut Stream) -> Result<Self, BaselineError> {
        let mut store = ParamStore::new();
        let view = Linear::new(&mut store, "single.view", feature_dim, sensor_dim, rng)?;
        let head = TwoLayer::new(&mut store, "single.head", sensor_dim, hidden_dim, classes, rng)?;
        Ok(SingleViewNet { store, view, head })
    }

    fn forward(&self, tape: &mut Tape, view: &[f64]) -> Result<crate::ndgrad::Var, BaselineError> {
        let x = tape.input(view.to_vec());
        let s = self.view.forward_act(tape, &self.store, x, Activation::Tanh)?;
        let logits = self.head.forward(tape, &self.store, s)?;
        Ok(tape.log_softmax(logits))
    }

    pub fn log_probs(&self, view: &[f64]) -> Result<Vec<f64>, BaselineError> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, view)?;
        Ok(tape.value(y).to_vec())
    }

    /// Minibatch SGD over every (instance, pose) view of `train`, early
    /// stopping on one random view per validation instance.
    pub fn train(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Self, f64), BaselineError> {
        cfg.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(BaselineError::Config("empty training or validation split".into()));
        }
        let meta = &train.meta;
        let mut net = SingleViewNet::init(
            meta.feature_dim,
            cfg.sensor_dim,
            cfg.hidden_dim,
            meta.classes,
            &mut Stream::new(cfg.seed, "init"),
        )?;
        let cells = meta.dims.cells();
        let mut order: Vec<(usize, usize)> =
            (0..train.len()).flat_map(|i| (0..cells).map(move |c| (i, c))).collect();
        let mut shuffle = Stream::new(cfg.seed, "train-shuffle");
        let eval = Stream::new(cfg.seed, "eval");
        let mut best = (net.clone(), f64::NEG_INFINITY);
        let mut since_best = 0;
        let mut tape = Tape::new();
        for epoch in 1..=cfg.epochs {
            shuffle.shuffle(&mut order);
            if cfg.learning_rate > 0.0 {
                for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                    for &(i, c) in batch {
                        let inst = &train.instances[i];
                        tape.reset();
                        let lp = net.forward(&mut tape, &inst.observe_f64(meta.dims.pose_of(c))?)?;
                        let picked = tape.pick(lp, inst.label);
                        let nll = tape.scale(picked, -1.0);
                        if !tape.scalar(nll).is_finite() {
                            return Err(BaselineError::Diverged { epoch, batch: b + 1 });
                        }
                        tape.backward(nll, &mut net.store)?;
                    }
                    let scale = 1.0 / batch.len() as f64;
                    let ids: Vec<_> = net.store.ids().collect();
                    for id in ids {
                        for g in net.store.block_mut(id).grad.data_mut() {
                            *g *= scale;
                        }
                    }
                    sgd_update(&mut net.store, cfg.learning_rate)?;
                }
            }
            let acc = net.accuracy_single(val, &eval)?;
            if acc > best.1 {
                best = (net.clone(), acc);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        Ok(best)
    }

    fn accuracy_single(&self, ds: &Dataset, eval: &Stream) -> Result<f64, BaselineError> {
        let mut hits = 0;
        for (i, inst) in ds.instances.iter().enumerate() {
            let p = init_pose(ds.meta.dims, &mut eval.fork(i as u64));
            hits += usize::from(argmax(&self.log_probs(&inst.observe_f64(p)?)?) == inst.label);
        }
        Ok(hits as f64 / ds.len() as f64)
    }
}

/// Poses `p_1 ..= p_steps`: a uniform start followed by uniformly random
/// legal motions.
pub fn random_walk(dims: crate::envgrid::GridDims, set: &MotionSet, steps: usize, rng: &mut Stream) -> Result<Vec<Pose>, BaselineError> {
    let mut p = init_pose(dims, rng);
    let mut poses = vec![p];
    for _ in 1..steps {
        p = apply_motion(p, set.get(set.sample(rng)), set, dims)?;
        poses.push(p);
    }
    Ok(poses)
}

/// Averaged single-view probabilities over a random walk; entry `t - 1`
/// of the result uses the first `t` views.
pub fn random_average_scores(
    net: &SingleViewNet,
    test: &Dataset,
    steps: usize,
    set: &MotionSet,
    eval: &Stream,
) -> Result<MethodScore, BaselineError> {
    let mut hits = vec![0usize; steps];
    for (i, inst) in test.instances.iter().enumerate() {
        let poses = random_walk(test.meta.dims, set, steps, &mut eval.fork(i as u64))?;
        let mut avg = vec![0.0; test.meta.classes];
        for (t, &p) in poses.iter().enumerate() {
            for (a, l) in avg.iter_mut().zip(net.log_probs(&inst.observe_f64(p)?)?) {
                *a += l.exp();
            }
            hits[t] += usize::from(argmax(&avg) == inst.label);
        }
    }
    Ok(MethodScore::from_hits(&hits, test.len()))
}

/// Single-view accuracy on one random view per test instance, repeated
/// for every `t` so it reads as a flat curve.
pub fn single_view(train: &Dataset, val: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<MethodScore, BaselineError> {
    let (net, _) = SingleViewNet::train(train, val, cfg)?;
    let acc = net.accuracy_single(test, &Stream::new(cfg.seed, "eval"))?;
    Ok(MethodScore { step_acc: vec![acc; cfg.steps], mean_steps: None })
}

pub fn random_average(train: &Dataset, val: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<MethodScore, BaselineError> {
    let (net, _) = SingleViewNet::train(train, val, cfg)?;
    let set = AgentConfig::for_dataset(&train.meta, cfg.steps).motion_set();
    random_average_scores(&net, test, cfg.steps, &set, &Stream::new(cfg.seed, "eval"))
}
