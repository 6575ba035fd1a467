//! VGD dataset files.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "VGD1"
//! 4       5 x u32 LE  C, E, A, D, N
//! 24      ...         N records: u32 LE label, then E*A*D f32 LE features
//!                     (elevation-major, azimuth-minor, feature-innermost)
//! end-8   u64 LE      number of bytes preceding this field
//! ```
//!
//! Class names live in an optional UTF-8 JSON sidecar `<file>.meta.json`
//! holding `{"class_names": [...]}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dataset, DatasetMeta, GridDims, ViewGridInstance};

pub const MAGIC: &[u8; 4] = b"VGD1";
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum VgdError {
    #[error("bad magic at byte 0: expected \"VGD1\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("truncated payload at byte {offset}: need {needed} more bytes, have {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("invalid dataset at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("length checksum at byte {offset} is {found}, expected {expected}")]
    Checksum { offset: usize, expected: u64, found: u64 },
    #[error("{extra} trailing bytes after checksum at byte {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    class_names: Vec<String>,
}

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let m = &ds.meta;
    let per = 4 + m.dims.cells() * m.feature_dim * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * per + 8);
    out.extend_from_slice(MAGIC);
    for v in [m.classes, m.dims.elevations, m.dims.azimuths, m.feature_dim, ds.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for inst in &ds.instances {
        out.extend_from_slice(&(inst.label as u32).to_le_bytes());
        for f in inst.features() {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    let len = out.len() as u64;
    out.extend_from_slice(&len.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VgdError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(VgdError::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, VgdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a VGD byte buffer. Class names default to `class<i>`.
pub fn decode(bytes: &[u8]) -> Result<Dataset, VgdError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| VgdError::BadMagic { found: bytes.to_vec() })?;
    if magic != MAGIC {
        return Err(VgdError::BadMagic { found: magic.to_vec() });
    }
    let mut header = [0usize; 5];
    for h in &mut header {
        *h = r.u32()? as usize;
    }
    let [classes, elevations, azimuths, feature_dim, n] = header;
    for (name, v, off) in [("C", classes, 4), ("E", elevations, 8), ("A", azimuths, 12), ("D", feature_dim, 16)] {
        if v == 0 {
            return Err(VgdError::Invalid { offset: off, reason: format!("{name} must be positive") });
        }
    }
    let dims = GridDims::new(elevations, azimuths);
    let nfeat = dims.cells() * feature_dim;
    let mut instances = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let label_at = r.pos;
        let label = r.u32()? as usize;
        if label >= classes {
            return Err(VgdError::Invalid {
                offset: label_at,
                reason: format!("label {label} >= class count {classes}"),
            });
        }
        let raw = r.take(nfeat * 4)?;
        let features: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(bad) = features.iter().position(|f| !f.is_finite()) {
            return Err(VgdError::Invalid {
                offset: label_at + 4 + bad * 4,
                reason: "non-finite feature".into(),
            });
        }
        let inst = ViewGridInstance::new(label, dims, feature_dim, features)
            .map_err(|e| VgdError::Invalid { offset: label_at, reason: e.to_string() })?;
        instances.push(inst);
    }
    let sum_at = r.pos;
    let found = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if found != sum_at as u64 {
        return Err(VgdError::Checksum { offset: sum_at, expected: sum_at as u64, found });
    }
    if r.pos != bytes.len() {
        return Err(VgdError::Trailing { offset: r.pos, extra: bytes.len() - r.pos });
    }
    let meta = DatasetMeta {
        classes,
        dims,
        feature_dim,
        class_names: DatasetMeta::default_class_names(classes),
    };
    Ok(Dataset { meta, instances })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), VgdError> {
    let io = |source| VgdError::Io { path: path.to_path_buf(), source };
    std::fs::write(path, encode(ds)).map_err(io)?;
    if !ds.meta.class_names.is_empty() {
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&Sidecar { class_names: ds.meta.class_names.clone() })
            .expect("string list serializes");
        std::fs::write(&side, json).map_err(|source| VgdError::Io { path: side.clone(), source })?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, VgdError> {
    let bytes = std::fs::read(path).map_err(|source| VgdError::Io { path: path.to_path_buf(), source })?;
    let mut ds = decode(&bytes)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = std::fs::read_to_string(&side)
            .map_err(|source| VgdError::Io { path: side.clone(), source })?;
        let sc: Sidecar = serde_json::from_str(&text)
            .map_err(|e| VgdError::Sidecar { path: side.clone(), reason: e.to_string() })?;
        if sc.class_names.len() != ds.meta.classes {
            return Err(VgdError::Sidecar {
                path: side,
                reason: format!("{} names for {} classes", sc.class_names.len(), ds.meta.classes),
            });
        }
        ds.meta.class_names = sc.class_names;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgrid::{generate_synthetic, SyntheticSpec};
    use crate::rng::Stream;

    fn small() -> Dataset {
        let spec = SyntheticSpec { instances_per_class: 3, ..SyntheticSpec::two_key_views(3, 4, 5, 6) };
        generate_synthetic(&spec, &mut Stream::new(1, "data-gen")).unwrap()
    }

    #[test]
    fn round_trip_equal() {
        let ds = small();
        let back = decode(&encode(&ds)).unwrap();
        assert_eq!(back.instances, ds.instances);
        assert_eq!(encode(&back), encode(&ds));
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let bytes = encode(&small());
        let cut = HEADER_LEN + 4 + 10;
        match decode(&bytes[..cut]) {
            Err(VgdError::Truncated { offset, .. }) => assert_eq!(offset, HEADER_LEN + 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_feature_dim_rejected() {
        let mut bytes = encode(&small());
        bytes[16..20].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(VgdError::Invalid { offset: 16, .. })));
    }

    #[test]
    fn magic_and_checksum_errors_are_distinct() {
        let mut bytes = encode(&small());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(VgdError::BadMagic { .. })));
        let mut bytes = encode(&small());
        let n = bytes.len();
        bytes[n - 8] ^= 1;
        assert!(matches!(decode(&bytes), Err(VgdError::Checksum { .. })));
        let mut bytes = encode(&small());
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(VgdError::Trailing { .. })));
    }

    #[test]
    fn files_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.vgd");
        let mut ds = small();
        ds.meta.class_names = vec!["mug".into(), "bowl".into(), "cap".into()];
        save_dataset(&ds, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }
}
