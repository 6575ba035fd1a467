//! Viewgrid world: poses and motions, labeled instances, synthetic data,
//! the VGD file format and stratified splits.

mod dataset;
mod pose;
mod split;
mod synthetic;
pub mod vgd;

use thiserror::Error;

pub use dataset::{Dataset, DatasetMeta, ViewGridInstance};
pub use pose::{apply_motion, init_pose, GridDims, Motion, MotionSet, Pose};
pub use split::split;
pub use synthetic::{generate_synthetic, single_view_bayes_ceiling, KeyLayout, SyntheticSpec};
pub use vgd::{load_dataset, save_dataset, VgdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("illegal action {0:?}: not in the motion set")]
    IllegalMotion(Motion),
    #[error("pose {0:?} outside the grid")]
    PoseOutOfRange(Pose),
    #[error("{0}")]
    Spec(String),
}
