use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::envgrid::{DatasetMeta, GridDims, Motion, MotionSet, Pose};

/// Pose knowledge exposed to the actor and look-ahead modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proprio {
    /// Elevation index scaled to [0, 1]; the viewing-sphere setting.
    Elevation,
    /// Azimuth index scaled to [0, 1); the turntable setting.
    Azimuth,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub feature_dim: usize,
    pub sensor_dim: usize,
    pub aggregate_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub steps: usize,
    pub grid: GridDims,
    pub motion_window: (usize, usize),
    pub proprio: Proprio,
}

impl AgentConfig {
    /// Defaults for a dataset: 32-wide layers, a 5x7 window (1x7 on a
    /// single-elevation grid) and elevation proprioception (azimuth on a
    /// single-elevation grid).
    pub fn for_dataset(meta: &DatasetMeta, steps: usize) -> Self {
        let turntable = meta.dims.elevations == 1;
        AgentConfig {
            feature_dim: meta.feature_dim,
            sensor_dim: 32,
            aggregate_dim: 32,
            hidden_dim: 32,
            classes: meta.classes,
            steps,
            grid: meta.dims,
            motion_window: if turntable { (1, 7) } else { (5, 7) },
            proprio: if turntable { Proprio::Azimuth } else { Proprio::Elevation },
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let dims = [
            self.feature_dim,
            self.sensor_dim,
            self.aggregate_dim,
            self.hidden_dim,
            self.classes,
            self.steps,
            self.grid.elevations,
            self.grid.azimuths,
        ];
        if dims.contains(&0) {
            return Err(AgentError::Config(format!("all dimensions must be positive: {self:?}")));
        }
        MotionSet::new(self.motion_window.0, self.motion_window.1)
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn check_dataset(&self, meta: &DatasetMeta) -> Result<(), AgentError> {
        if meta.feature_dim != self.feature_dim || meta.dims != self.grid || meta.classes != self.classes {
            return Err(AgentError::Config(format!(
                "agent expects D={} grid={:?} C={}, dataset has D={} grid={:?} C={}",
                self.feature_dim, self.grid, self.classes, meta.feature_dim, meta.dims, meta.classes
            )));
        }
        Ok(())
    }

    pub fn motion_set(&self) -> MotionSet {
        MotionSet::new(self.motion_window.0, self.motion_window.1).expect("validated window")
    }

    pub fn num_actions(&self) -> usize {
        self.motion_window.0 * self.motion_window.1
    }

    /// One-hot action plus the two offsets scaled by the window half-widths.
    pub fn motion_encoding_dim(&self) -> usize {
        self.num_actions() + 2
    }

    pub fn proprio_dim(&self) -> usize {
        match self.proprio {
            Proprio::None => 0,
            _ => 1,
        }
    }

    pub fn encode_motion(&self, set: &MotionSet, action: usize) -> Vec<f64> {
        let mut enc = vec![0.0; self.motion_encoding_dim()];
        enc[action] = 1.0;
        let Motion { d_elevation, d_azimuth } = set.get(action);
        let (he, ha) = set.max_offsets();
        let n = self.num_actions();
        if he > 0 {
            enc[n] = f64::from(d_elevation) / f64::from(he);
        }
        if ha > 0 {
            enc[n + 1] = f64::from(d_azimuth) / f64::from(ha);
        }
        enc
    }

    pub fn encode_proprio(&self, p: Pose) -> Vec<f64> {
        match self.proprio {
            Proprio::None => vec![],
            Proprio::Elevation => {
                let span = self.grid.elevations.saturating_sub(1);
                vec![if span == 0 { 0.0 } else { p.elevation as f64 / span as f64 }]
            }
            Proprio::Azimuth => vec![p.azimuth as f64 / self.grid.azimuths as f64],
        }
    }
}
