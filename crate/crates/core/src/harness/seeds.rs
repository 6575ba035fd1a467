use crate::rng::Stream;

/// Stream names derived from one master seed. Training additionally uses
/// `train-shuffle`, and search uses `search`.
pub const STREAM_NAMES: [&str; 5] = ["data-gen", "split", "init", "rollout", "eval"];

/// Independent named streams for one run. See [`crate::rng`] for the derivation.
#[derive(Clone, Debug)]
pub struct SeedStreams {
    pub data_gen: Stream,
    pub split: Stream,
    pub init: Stream,
    pub rollout: Stream,
    pub eval: Stream,
}

pub fn seed_everything(master: u64) -> SeedStreams {
    SeedStreams {
        data_gen: Stream::new(master, "data-gen"),
        split: Stream::new(master, "split"),
        init: Stream::new(master, "init"),
        rollout: Stream::new(master, "rollout"),
        eval: Stream::new(master, "eval"),
    }
}
