//! `.crfl` potential checkpoints.
//!
//! Layout: `b"CRFL"`, version `u32`, config hash `u64`, `t` as `f64`, then the
//! potential values as little-endian `f64` in grid order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRFL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hash: u64,
    pub t: f64,
    pub phi: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.phi.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.hash.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for v in &self.phi {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("not a CRFL checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let t = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() % 8 != 0 {
            return Err(Error::Checkpoint("truncated potential array".into()));
        }
        let phi = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Checkpoint { hash, t, phi })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&buf)
    }

    /// Fails unless the checkpoint belongs to the same configuration and grid.
    pub fn check_compatible(&self, hash: u64, len: usize) -> Result<()> {
        if self.hash != hash {
            return Err(Error::Checkpoint(format!(
                "configuration hash {:016x} does not match checkpoint {:016x}",
                hash, self.hash
            )));
        }
        if self.phi.len() != len {
            return Err(Error::Checkpoint(format!("checkpoint holds {} values, grid has {len}", self.phi.len())));
        }
        Ok(())
    }
}

/// FNV-1a, stable across platforms and releases.
pub fn config_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
