//! `HTA1` tensor archives: magic, u32 entry count, then per entry a u32 name
//! length, UTF-8 name, u8 rank, u32 dims and the f32 payload, all
//! little-endian.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorcore::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"HTA1";

/// Ordered named tensors with unique names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("duplicate archive entry `{name}`")));
        }
        if t.rank() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("entry `{name}` has rank {}", t.rank())));
        }
        self.entries.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.iter().map(|(n, t)| 9 + n.len() + 4 * (t.rank() + t.len())).sum();
        let mut out = Vec::with_capacity(8 + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Parse { offset: 0, msg: format!("bad magic {magic:?}") });
        }
        let count = r.u32("entry count")? as usize;
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let at = r.pos;
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Parse { offset: at + 4, msg: "entry name is not UTF-8".into() })?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(Error::Parse { offset: at, msg: format!("duplicate entry `{name}`") });
            }
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::Parse {
                offset: r.pos,
                msg: format!("shape {shape:?} overflows"),
            })?;
            let nbytes = n.checked_mul(4).ok_or(Error::Parse { offset: r.pos, msg: "payload too large".into() })?;
            let raw = r.take(nbytes, "payload")?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            entries.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse { offset: r.pos, msg: format!("{} trailing bytes", bytes.len() - r.pos) });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_params(&self) -> ParamSet {
        self.entries.iter().cloned().collect()
    }

    pub fn from_params(params: &ParamSet) -> Self {
        Self { entries: params.iter().map(|(n, t)| (n.clone(), t.clone())).collect() }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            offset: self.pos,
            msg: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_archive(path: impl AsRef<Path>, archive: &TensorArchive) -> Result<()> {
    archive.write(path)
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<TensorArchive> {
    TensorArchive::read(path)
}
