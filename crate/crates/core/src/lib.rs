pub mod agent;
pub mod baselines;
pub mod envgrid;
pub mod ndgrad;
pub mod rng;
pub mod train;
pub mod harness;
