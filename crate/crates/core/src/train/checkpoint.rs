use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{TrainConfig, TrainState};
use super::TrainError;
use crate::agent::{AgentConfig, AgentParams};
use crate::rng::Stream;

const MAGIC: &[u8; 4] = b"VGCK";
const VERSION: u32 = 1;

/// Agent parameters plus what is needed to rebuild and resume them.
///
/// Layout, all integers little-endian: magic `VGCK`, u32 version, u64
/// length and JSON text of `{agent, train, state}`, u32 block count, then per
/// block a u32-prefixed UTF-8 id, u32 rank, u64 extents and f64 values.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub state: Option<TrainState>,
    pub params: AgentParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    agent: AgentConfig,
    train: TrainConfig,
    state: Option<TrainState>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.bytes.len() - self.pos < n {
            return Err(TrainError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, wide: bool) -> Result<usize, TrainError> {
        let v = if wide { self.u64()? } else { u64::from(self.u32()?) };
        usize::try_from(v).map_err(|_| TrainError::Checkpoint("length overflow".into()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let header = Header { agent: self.agent.clone(), train: self.train.clone(), state: self.state.clone() };
        let json = serde_json::to_vec(&header).expect("serializable header");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let blocks = self.params.store.blocks();
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for b in blocks {
            out.extend_from_slice(&(b.id.len() as u32).to_le_bytes());
            out.extend_from_slice(b.id.as_bytes());
            out.extend_from_slice(&(b.value.shape().len() as u32).to_le_bytes());
            for &d in b.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in b.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(TrainError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let n = r.len(true)?;
        let header: Header =
            serde_json::from_slice(r.take(n)?).map_err(|e| TrainError::Checkpoint(format!("header: {e}")))?;
        // Rebuild the layout, then overwrite every value.
        let mut params = AgentParams::init(&header.agent, &mut Stream::new(0, "init"))?;
        let count = r.len(false)?;
        if count != params.store.len() {
            return Err(TrainError::Checkpoint(format!(
                "{count} blocks stored, layout has {}",
                params.store.len()
            )));
        }
        for _ in 0..count {
            let id_len = r.len(false)?;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| TrainError::Checkpoint("block id is not UTF-8".into()))?
                .to_string();
            let pid = params
                .store
                .lookup(&id)
                .ok_or_else(|| TrainError::Checkpoint(format!("unknown block {id}")))?;
            let rank = r.len(false)?;
            let shape = (0..rank).map(|_| r.len(true)).collect::<Result<Vec<_>, _>>()?;
            let value = params.store.value_mut(pid);
            if shape != value.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "block {id}: stored shape {shape:?}, layout {:?}",
                    value.shape()
                )));
            }
            for v in value.data_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(TrainError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { agent: header.agent, train: header.train, state: header.state, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.encode()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}
