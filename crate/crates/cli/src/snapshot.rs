//! Versioned binary model snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "CTXSNAP\0"
//! version    u32
//! config     32 bytes SHA-256 of the canonical config text
//! meta_len   u32, then meta_len bytes of UTF-8 `key=value` lines
//! blocks     u32, then per block: rows u32, cols u32, rows*cols f64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use codetext_core::harness::ExperimentConfig;
use codetext_core::Matrix;
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 8] = b"CTXSNAP\0";
pub const VERSION: u32 = 1;

pub fn config_hash(cfg: &ExperimentConfig) -> [u8; 32] {
    Sha256::digest(cfg.to_text().as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config_hash: [u8; 32],
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<Matrix>,
}

impl Snapshot {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Snapshot {
            config_hash: config_hash(cfg),
            meta: BTreeMap::new(),
            blocks: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .with_context(|| format!("snapshot has no {key:?} entry"))
    }

    pub fn push<'a>(&mut self, blocks: impl IntoIterator<Item = &'a Matrix>) {
        self.blocks.extend(blocks.into_iter().cloned());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(b.cols() as u32).to_le_bytes());
            for x in b.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        ensure!(r.take(8)? == MAGIC, "not a codetext snapshot");
        let version = r.u32()?;
        ensure!(version == VERSION, "snapshot version {version}, expected {VERSION}");
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?).context("snapshot metadata is not UTF-8")?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line.split_once('=').context("malformed snapshot metadata")?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).context("block shape overflows")?;
            let raw = r.take(n.checked_mul(8).context("block shape overflows")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blocks.push(Matrix::from_vec(rows, cols, data)?);
        }
        ensure!(r.pos == bytes.len(), "{} trailing bytes after snapshot", bytes.len() - r.pos);
        Ok(Snapshot {
            config_hash,
            meta,
            blocks,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Snapshot::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::formats::write_file(path, self.to_bytes())
    }

    /// Fails unless the snapshot was written under `cfg`.
    pub fn check_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let now = config_hash(cfg);
        if now != self.config_hash {
            bail!(
                "snapshot config hash {} differs from the current config hash {}",
                hex::encode(self.config_hash),
                hex::encode(now)
            );
        }
        Ok(())
    }

    /// Copies the blocks from `start` into `targets`, checking shapes;
    /// returns the index after the last block used.
    pub fn fill(&self, start: usize, targets: Vec<&mut Matrix>) -> Result<usize> {
        let end = start + targets.len();
        ensure!(end <= self.blocks.len(), "snapshot has {} blocks, needed {end}", self.blocks.len());
        for (i, (t, s)) in targets.into_iter().zip(&self.blocks[start..end]).enumerate() {
            ensure!(
                t.shape() == s.shape(),
                "block {} has shape {:?}, model expects {:?}",
                start + i,
                s.shape(),
                t.shape()
            );
            *t = s.clone();
        }
        Ok(end)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.context("snapshot is truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
