use serde::{Deserialize, Serialize};

use super::{EnvError, GridDims, Pose};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub classes: usize,
    pub dims: GridDims,
    pub feature_dim: usize,
    pub class_names: Vec<String>,
}

impl DatasetMeta {
    pub fn default_class_names(classes: usize) -> Vec<String> {
        (0..classes).map(|c| format!("class{c}")).collect()
    }
}

/// One labeled instance: a feature vector for every grid pose, stored
/// elevation-major, azimuth-minor, feature-innermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewGridInstance {
    pub label: usize,
    dims: GridDims,
    feature_dim: usize,
    features: Vec<f32>,
}

impl ViewGridInstance {
    pub fn new(
        label: usize,
        dims: GridDims,
        feature_dim: usize,
        features: Vec<f32>,
    ) -> Result<Self, EnvError> {
        if features.len() != dims.cells() * feature_dim {
            return Err(EnvError::Spec(format!(
                "instance needs {} features, got {}",
                dims.cells() * feature_dim,
                features.len()
            )));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(EnvError::Spec("non-finite feature".into()));
        }
        Ok(ViewGridInstance { label, dims, feature_dim, features })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// The stored view at `p`.
    pub fn observe(&self, p: Pose) -> Result<&[f32], EnvError> {
        if !self.dims.contains(p) {
            return Err(EnvError::PoseOutOfRange(p));
        }
        let start = self.dims.cell_index(p) * self.feature_dim;
        Ok(&self.features[start..start + self.feature_dim])
    }

    pub fn observe_f64(&self, p: Pose) -> Result<Vec<f64>, EnvError> {
        Ok(self.observe(p)?.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn view_mut(&mut self, p: Pose) -> &mut [f32] {
        let start = self.dims.cell_index(p) * self.feature_dim;
        &mut self.features[start..start + self.feature_dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub instances: Vec<ViewGridInstance>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, instances: Vec<ViewGridInstance>) -> Result<Self, EnvError> {
        let ds = Dataset { meta, instances };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let m = &self.meta;
        if m.classes == 0 || m.dims.cells() == 0 || m.feature_dim == 0 {
            return Err(EnvError::Spec(format!("degenerate dataset meta {m:?}")));
        }
        if !m.class_names.is_empty() && m.class_names.len() != m.classes {
            return Err(EnvError::Spec(format!(
                "{} class names for {} classes",
                m.class_names.len(),
                m.classes
            )));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.dims != m.dims || inst.feature_dim != m.feature_dim {
                return Err(EnvError::Spec(format!("instance {i} has mismatched dimensions")));
            }
            if inst.label >= m.classes {
                return Err(EnvError::Spec(format!("instance {i} label {} >= {}", inst.label, m.classes)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.meta.classes];
        for inst in &self.instances {
            counts[inst.label] += 1;
        }
        counts
    }

    /// Most frequent label; ties go to the lowest class index.
    pub fn modal_class(&self) -> usize {
        let counts = self.class_counts();
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            meta: self.meta.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgrid::{MotionSet, Motion};

    fn inst(label: usize, seed: f32) -> ViewGridInstance {
        let dims = GridDims::new(3, 4);
        let feats = (0..dims.cells() * 2).map(|i| seed + i as f32).collect();
        ViewGridInstance::new(label, dims, 2, feats).unwrap()
    }

    #[test]
    fn full_circle_returns_same_view() {
        let x = inst(0, 0.5);
        let set = MotionSet::sphere_default();
        let start = Pose::new(1, 2);
        let mut p = start;
        for da in [3, 3, -2] {
            p = crate::envgrid::apply_motion(p, Motion::new(0, da), &set, x.dims()).unwrap();
        }
        assert_eq!(x.observe(p).unwrap(), x.observe(start).unwrap());
    }

    #[test]
    fn single_cell_difference_is_local() {
        let a = inst(0, 0.0);
        let mut b = a.clone();
        b.view_mut(Pose::new(2, 1))[0] += 1.0;
        for cell in 0..a.dims().cells() {
            let p = a.dims().pose_of(cell);
            let same = a.observe(p).unwrap() == b.observe(p).unwrap();
            assert_eq!(same, p != Pose::new(2, 1));
        }
    }

    #[test]
    fn observe_is_pure_and_bounds_checked() {
        let a = inst(0, 1.0);
        let p = Pose::new(0, 3);
        assert_eq!(a.observe(p).unwrap().to_vec(), a.observe(p).unwrap().to_vec());
        assert!(matches!(a.observe(Pose::new(3, 0)), Err(EnvError::PoseOutOfRange(_))));
    }

    #[test]
    fn modal_class_breaks_ties_low() {
        let meta = DatasetMeta {
            classes: 3,
            dims: GridDims::new(3, 4),
            feature_dim: 2,
            class_names: vec![],
        };
        let ds = Dataset::new(meta, vec![inst(2, 0.0), inst(1, 0.0), inst(2, 0.0), inst(1, 0.0)]).unwrap();
        assert_eq!(ds.modal_class(), 1);
    }
}
