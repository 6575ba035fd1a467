use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Trajectory;

/// One line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: usize,
    pub label: usize,
    pub poses: Vec<[usize; 2]>,
    pub actions: Vec<usize>,
    pub motions: Vec<[i32; 2]>,
    pub policies: Vec<Vec<f64>>,
    pub predicted: Vec<usize>,
    pub correct: Vec<bool>,
}

impl TraceRecord {
    pub fn from_trajectory(episode: usize, traj: &Trajectory) -> Self {
        let predicted: Vec<usize> = (1..=traj.steps()).map(|t| traj.predicted(t)).collect();
        TraceRecord {
            episode,
            label: traj.label,
            poses: traj.poses.iter().map(|p| [p.elevation, p.azimuth]).collect(),
            actions: traj.actions.clone(),
            motions: traj.motions.iter().map(|m| [m.d_elevation, m.d_azimuth]).collect(),
            policies: traj.policies.clone(),
            correct: predicted.iter().map(|&p| p == traj.label).collect(),
            predicted,
        }
    }
}

/// Newline-delimited JSON, one record per episode.
pub fn write_traces<W: Write>(out: &mut W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
