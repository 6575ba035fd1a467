use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub elevations: usize,
    pub azimuths: usize,
}

impl GridDims {
    pub fn new(elevations: usize, azimuths: usize) -> Self {
        GridDims { elevations, azimuths }
    }

    pub fn cells(&self) -> usize {
        self.elevations * self.azimuths
    }

    pub fn contains(&self, p: Pose) -> bool {
        p.elevation < self.elevations && p.azimuth < self.azimuths
    }

    /// Row-major cell index, elevation-major.
    pub fn cell_index(&self, p: Pose) -> usize {
        p.elevation * self.azimuths + p.azimuth
    }

    pub fn pose_of(&self, cell: usize) -> Pose {
        Pose { elevation: cell / self.azimuths, azimuth: cell % self.azimuths }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub elevation: usize,
    pub azimuth: usize,
}

impl Pose {
    pub fn new(elevation: usize, azimuth: usize) -> Self {
        Pose { elevation, azimuth }
    }

    /// Elevation clamps at the poles, azimuth wraps.
    pub fn shifted(self, m: Motion, dims: GridDims) -> Pose {
        let e = (self.elevation as i64 + m.d_elevation as i64).clamp(0, dims.elevations as i64 - 1);
        let a = (self.azimuth as i64 + m.d_azimuth as i64).rem_euclid(dims.azimuths as i64);
        Pose { elevation: e as usize, azimuth: a as usize }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Motion {
    pub d_elevation: i32,
    pub d_azimuth: i32,
}

impl Motion {
    pub const ZERO: Motion = Motion { d_elevation: 0, d_azimuth: 0 };

    pub fn new(d_elevation: i32, d_azimuth: i32) -> Self {
        Motion { d_elevation, d_azimuth }
    }
}

impl std::ops::Add for Motion {
    type Output = Motion;
    fn add(self, o: Motion) -> Motion {
        Motion::new(self.d_elevation + o.d_elevation, self.d_azimuth + o.d_azimuth)
    }
}

/// Centered window of relative motions, enumerated elevation-major from the
/// most negative offsets. This order is the action index order everywhere.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionSet {
    window_e: usize,
    window_a: usize,
    members: Vec<Motion>,
}

impl MotionSet {
    pub fn new(window_e: usize, window_a: usize) -> Result<Self, EnvError> {
        if window_e == 0 || window_a == 0 || window_e.is_multiple_of(2) || window_a.is_multiple_of(2) {
            return Err(EnvError::Spec(format!(
                "motion window must be odd and positive, got {window_e}x{window_a}"
            )));
        }
        let (he, ha) = ((window_e / 2) as i32, (window_a / 2) as i32);
        let members = (-he..=he)
            .flat_map(|de| (-ha..=ha).map(move |da| Motion::new(de, da)))
            .collect();
        Ok(MotionSet { window_e, window_a, members })
    }

    /// The 5x7 window used on the 2-D viewing sphere.
    pub fn sphere_default() -> Self {
        MotionSet::new(5, 7).expect("static window")
    }

    pub fn window(&self) -> (usize, usize) {
        (self.window_e, self.window_a)
    }

    pub fn max_offsets(&self) -> (i32, i32) {
        ((self.window_e / 2) as i32, (self.window_a / 2) as i32)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Motion] {
        &self.members
    }

    pub fn get(&self, index: usize) -> Motion {
        self.members[index]
    }

    pub fn index_of(&self, m: Motion) -> Option<usize> {
        let (he, ha) = self.max_offsets();
        if m.d_elevation.abs() > he || m.d_azimuth.abs() > ha {
            return None;
        }
        Some(((m.d_elevation + he) as usize) * self.window_a + (m.d_azimuth + ha) as usize)
    }

    pub fn contains(&self, m: Motion) -> bool {
        self.index_of(m).is_some()
    }

    /// Uniform random member index.
    pub fn sample(&self, rng: &mut Stream) -> usize {
        rng.below(self.members.len())
    }
}

pub fn apply_motion(p: Pose, m: Motion, set: &MotionSet, dims: GridDims) -> Result<Pose, EnvError> {
    if !set.contains(m) {
        return Err(EnvError::IllegalMotion(m));
    }
    if !dims.contains(p) {
        return Err(EnvError::PoseOutOfRange(p));
    }
    Ok(p.shifted(m, dims))
}

pub fn init_pose(dims: GridDims, rng: &mut Stream) -> Pose {
    dims.pose_of(rng.below(dims.cells()))
}
