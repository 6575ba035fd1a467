//! Synthetic "two-key-views" viewgrids.
//!
//! Every class owns key views on two fixed rings of the grid. On the first
//! ring class `c` shows prototype `P[c]`; on the second ring it shows
//! `P[(c + 1) % C]`, so each key prototype is shared by exactly two classes
//! and identifies the class only together with the other key or with
//! knowledge of which ring it came from. All remaining cells show a confuser
//! prototype drawn uniformly (per instance, per cell) from a pool shared by
//! every class. Gaussian noise of amplitude `noise` is added everywhere.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, EnvError, GridDims, Pose, ViewGridInstance};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KeyLayout {
    /// Every cell shows the class's own prototype.
    Everywhere,
    /// Key views fill whole elevation rings.
    Rings { first: usize, second: Option<usize> },
    /// Key views fill whole azimuth columns (turntable grids).
    Columns { first: usize, second: Option<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub elevations: usize,
    pub azimuths: usize,
    pub feature_dim: usize,
    pub instances_per_class: usize,
    pub layout: KeyLayout,
    pub confusers: usize,
    pub noise: f64,
}

impl SyntheticSpec {
    /// Two key rings two elevation steps apart, `C` confusers, noise 0.1.
    pub fn two_key_views(classes: usize, elevations: usize, azimuths: usize, feature_dim: usize) -> Self {
        let first = (elevations.saturating_sub(1)) / 3;
        let second = (first + 2).min(elevations.saturating_sub(1));
        SyntheticSpec {
            classes,
            elevations,
            azimuths,
            feature_dim,
            instances_per_class: 10,
            layout: KeyLayout::Rings { first, second: Some(second) },
            confusers: classes,
            noise: 0.1,
        }
    }

    /// Single-view-separable control: one prototype per class at every pose, no noise.
    pub fn degenerate_control(classes: usize, elevations: usize, azimuths: usize, feature_dim: usize) -> Self {
        SyntheticSpec {
            classes,
            elevations,
            azimuths,
            feature_dim,
            instances_per_class: 10,
            layout: KeyLayout::Everywhere,
            confusers: 0,
            noise: 0.0,
        }
    }

    pub fn dims(&self) -> GridDims {
        GridDims::new(self.elevations, self.azimuths)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Spec(m));
        if self.classes == 0 || self.elevations == 0 || self.azimuths == 0 || self.feature_dim == 0 {
            return bad("classes, grid and feature dimensions must be positive".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be finite and non-negative, got {}", self.noise));
        }
        let (first, second, extent, axis) = match self.layout {
            KeyLayout::Everywhere => return Ok(()),
            KeyLayout::Rings { first, second } => (first, second, self.elevations, "elevation"),
            KeyLayout::Columns { first, second } => (first, second, self.azimuths, "azimuth"),
        };
        for k in std::iter::once(first).chain(second) {
            if k >= extent {
                return bad(format!("key {axis} {k} outside grid of {extent}"));
            }
        }
        if second == Some(first) {
            return bad("the two key positions coincide".into());
        }
        let key_lines = 1 + usize::from(second.is_some());
        if key_lines < extent && self.confusers == 0 {
            return bad("non-key cells exist but the confuser pool is empty".into());
        }
        Ok(())
    }

    /// Which prototype class `label` shows at `p`, if `p` is a key view.
    pub fn key_at(&self, label: usize, p: Pose) -> Option<usize> {
        let (first, second, coord) = match self.layout {
            KeyLayout::Everywhere => return Some(label),
            KeyLayout::Rings { first, second } => (first, second, p.elevation),
            KeyLayout::Columns { first, second } => (first, second, p.azimuth),
        };
        if coord == first {
            Some(label)
        } else if Some(coord) == second {
            Some((label + 1) % self.classes)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Source {
    Key(usize),
    Confuser(usize),
}

/// Exact accuracy of the Bayes-optimal pose-agnostic classifier that sees
/// one uniformly random view of a uniformly random class, treating distinct
/// prototypes as perfectly distinguishable (the noise-free limit).
pub fn single_view_bayes_ceiling(spec: &SyntheticSpec) -> f64 {
    let dims = spec.dims();
    let mut joint: HashMap<Source, Vec<f64>> = HashMap::new();
    let base = 1.0 / (spec.classes as f64 * dims.cells() as f64);
    for c in 0..spec.classes {
        for cell in 0..dims.cells() {
            match spec.key_at(c, dims.pose_of(cell)) {
                Some(k) => {
                    joint.entry(Source::Key(k)).or_insert_with(|| vec![0.0; spec.classes])[c] += base;
                }
                None => {
                    let w = base / spec.confusers as f64;
                    for j in 0..spec.confusers {
                        joint.entry(Source::Confuser(j)).or_insert_with(|| vec![0.0; spec.classes])[c] += w;
                    }
                }
            }
        }
    }
    joint.values().map(|m| m.iter().copied().fold(0.0, f64::max)).sum()
}

fn prototype(dim: usize, rng: &mut Stream) -> Vec<f64> {
    (0..dim).map(|_| rng.normal()).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Stream) -> Result<Dataset, EnvError> {
    spec.validate()?;
    let dims = spec.dims();
    let keys: Vec<Vec<f64>> = (0..spec.classes).map(|_| prototype(spec.feature_dim, rng)).collect();
    let confusers: Vec<Vec<f64>> = (0..spec.confusers).map(|_| prototype(spec.feature_dim, rng)).collect();

    let mut instances = Vec::with_capacity(spec.classes * spec.instances_per_class);
    for label in 0..spec.classes {
        for _ in 0..spec.instances_per_class {
            let mut features = Vec::with_capacity(dims.cells() * spec.feature_dim);
            for cell in 0..dims.cells() {
                let proto = match spec.key_at(label, dims.pose_of(cell)) {
                    Some(k) => &keys[k],
                    None => &confusers[rng.below(spec.confusers)],
                };
                for &v in proto {
                    let noisy = if spec.noise > 0.0 { v + spec.noise * rng.normal() } else { v };
                    features.push(noisy as f32);
                }
            }
            instances.push(ViewGridInstance::new(label, dims, spec.feature_dim, features)?);
        }
    }
    let meta = DatasetMeta {
        classes: spec.classes,
        dims,
        feature_dim: spec.feature_dim,
        class_names: DatasetMeta::default_class_names(spec.classes),
    };
    Dataset::new(meta, instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgrid::vgd;

    #[test]
    fn two_key_default_rings() {
        let s = SyntheticSpec::two_key_views(6, 6, 6, 16);
        assert_eq!(s.layout, KeyLayout::Rings { first: 1, second: Some(3) });
        s.validate().unwrap();
    }

    #[test]
    fn bayes_ceiling_by_hand() {
        // Key rings are 2 of 6 rows; a key view narrows to 2 classes, a
        // confuser view leaves all C equally likely.
        let s = SyntheticSpec::two_key_views(6, 6, 6, 16);
        let want = (2.0 / 6.0) * 0.5 + (4.0 / 6.0) / 6.0;
        assert!((single_view_bayes_ceiling(&s) - want).abs() < 1e-12);

        let s = SyntheticSpec::two_key_views(4, 6, 6, 16);
        let want = (2.0 / 6.0) * 0.5 + (4.0 / 6.0) / 4.0;
        assert!((single_view_bayes_ceiling(&s) - want).abs() < 1e-12);

        let d = SyntheticSpec::degenerate_control(5, 3, 3, 8);
        assert!((single_view_bayes_ceiling(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_key_ring_ceiling() {
        let s = SyntheticSpec {
            layout: KeyLayout::Rings { first: 2, second: None },
            ..SyntheticSpec::two_key_views(4, 6, 6, 8)
        };
        let want = (1.0 / 6.0) * 1.0 + (5.0 / 6.0) / 4.0;
        assert!((single_view_bayes_ceiling(&s) - want).abs() < 1e-12);
    }

    #[test]
    fn key_views_follow_layout() {
        let spec = SyntheticSpec { noise: 0.0, instances_per_class: 2, ..SyntheticSpec::two_key_views(4, 6, 6, 5) };
        let ds = generate_synthetic(&spec, &mut Stream::new(3, "data-gen")).unwrap();
        let of = |label: usize, p: Pose| {
            ds.instances.iter().find(|i| i.label == label).unwrap().observe(p).unwrap().to_vec()
        };
        for c in 0..4 {
            assert_eq!(of(c, Pose::new(1, 0)), of(c, Pose::new(1, 4)));
            assert_eq!(of(c, Pose::new(3, 2)), of((c + 1) % 4, Pose::new(1, 5)));
        }
        assert_ne!(of(0, Pose::new(1, 0)), of(1, Pose::new(1, 0)));
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut s = SyntheticSpec::two_key_views(4, 6, 6, 5);
        s.layout = KeyLayout::Rings { first: 6, second: None };
        assert!(s.validate().is_err());
        s.layout = KeyLayout::Rings { first: 2, second: Some(2) };
        assert!(s.validate().is_err());
        s.layout = KeyLayout::Rings { first: 2, second: Some(3) };
        s.confusers = 0;
        assert!(s.validate().is_err());
        assert!(SyntheticSpec::degenerate_control(3, 2, 2, 4).validate().is_ok());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec { instances_per_class: 4, ..SyntheticSpec::two_key_views(3, 6, 6, 8) };
        let a = generate_synthetic(&spec, &mut Stream::new(9, "data-gen")).unwrap();
        let b = generate_synthetic(&spec, &mut Stream::new(9, "data-gen")).unwrap();
        assert_eq!(vgd::encode(&a), vgd::encode(&b));
        let c = generate_synthetic(&spec, &mut Stream::new(10, "data-gen")).unwrap();
        assert_ne!(vgd::encode(&a), vgd::encode(&c));
    }
}
