//! Versioned binary checkpoints with a readable sidecar.
//!
//! Layout (little endian): magic `AVFDCKPT`, u32 version, u32 header length,
//! JSON header, u32 block count, then per block a u32 name length, the name,
//! a u64 value count and f64 values, and finally a u64 step count followed by
//! `(epoch u64, step u64, total f64, av f64, ft f64)` per step.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use avfd_core::model::{Detector, LossBreakdown};
use avfd_core::training::StepRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{self, Error, Result};
use crate::prompts::PromptSet;

pub const MAGIC: &[u8; 8] = b"AVFDCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub prompts: PromptSet,
    pub detector: Detector,
    pub epochs: usize,
    pub history: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: BTreeMap<String, String>,
    positives: Vec<String>,
    negatives: Vec<String>,
    epochs: usize,
    seed: u64,
}

impl Checkpoint {
    /// Rebuilds an untrained detector for `config` and `prompts`.
    pub fn initial(config: RunConfig, prompts: PromptSet) -> Result<Self> {
        let detector = Detector::new(config.model, prompts.positives.clone(), prompts.negatives.clone(), config.seed)?;
        Ok(Self { config, prompts, detector, epochs: 0, history: Vec::new() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            positives: self.prompts.positives.clone(),
            negatives: self.prompts.negatives.clone(),
            epochs: self.epochs,
            seed: self.config.seed,
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = MAGIC.to_vec();
        out.extend(VERSION.to_le_bytes());
        out.extend((json.len() as u32).to_le_bytes());
        out.extend(json);
        let blocks = self.detector.blocks();
        out.extend((blocks.len() as u32).to_le_bytes());
        for (name, values) in blocks {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((values.len() as u64).to_le_bytes());
            for v in values {
                out.extend(v.to_le_bytes());
            }
        }
        out.extend((self.history.len() as u64).to_le_bytes());
        for s in &self.history {
            out.extend((s.epoch as u64).to_le_bytes());
            out.extend((s.step as u64).to_le_bytes());
            for v in [s.loss.total, s.loss.av, s.loss.ft] {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.err("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| r.err(&e.to_string()))?;
        let mut config = RunConfig::default();
        for (k, v) in &header.config {
            config.set(k, v)?;
        }
        let prompts = PromptSet { positives: header.positives, negatives: header.negatives };
        let mut ck = Self::initial(config, prompts)?;
        ck.epochs = header.epochs;
        let names: Vec<String> = ck.detector.blocks().into_iter().map(|(n, _)| n).collect();
        let count = r.u32()? as usize;
        if count != names.len() {
            return Err(r.err(&format!("expected {} parameter blocks, found {count}", names.len())));
        }
        let mut targets = ck.detector.blocks_mut();
        for (expected, target) in names.iter().zip(targets.iter_mut()) {
            let n = r.u32()? as usize;
            let name = String::from_utf8_lossy(r.take(n)?).into_owned();
            if &name != expected {
                return Err(r.err(&format!("expected block `{expected}`, found `{name}`")));
            }
            let len = r.u64()? as usize;
            if len != target.len() {
                return Err(r.err(&format!("block `{name}` has {len} values, expected {}", target.len())));
            }
            for v in target.iter_mut() {
                *v = r.f64()?;
            }
        }
        let steps = r.u64()? as usize;
        for _ in 0..steps {
            let epoch = r.u64()? as usize;
            let step = r.u64()? as usize;
            let (total, av, ft) = (r.f64()?, r.f64()?, r.f64()?);
            ck.history.push(StepRecord { epoch, step, loss: LossBreakdown { total, av, ft } });
        }
        if r.pos != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        Ok(ck)
    }

    pub fn sidecar_text(&self) -> String {
        let mut s = format!(
            "format = avfd-checkpoint v{VERSION}\nepochs = {}\nsteps = {}\nparameters = {}\n",
            self.epochs,
            self.history.len(),
            self.detector.parameter_count()
        );
        if let Some(last) = self.history.last() {
            s.push_str(&format!("final_loss = {}\n", last.loss.total));
        }
        s.push_str(&self.config.to_text());
        s
    }

    /// Writes the checkpoint and `<path>.txt`.
    pub fn save(&self, path: &Path) -> Result<()> {
        error::write(path, self.to_bytes())?;
        error::write(&sidecar_path(path), self.sidecar_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&error::read(path)?, path)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Checkpoint { path: self.path.to_path_buf(), message: message.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_overrides(&["dim=8", "raw_dim=4", "token_dim=4", "hidden=3", "seed=5"]).unwrap();
        c
    }

    #[test]
    fn byte_round_trip() {
        let mut ck = Checkpoint::initial(small(), PromptSet::default()).unwrap();
        ck.detector.polarity.as_mut_slice()[3] = 0.125;
        ck.epochs = 2;
        ck.history.push(StepRecord { epoch: 0, step: 0, loss: LossBreakdown { total: 1.5, av: 1.0, ft: 0.5 } });
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("c")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = Checkpoint::initial(small(), PromptSet::default()).unwrap().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], Path::new("c")).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT", Path::new("c")).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, Path::new("c")).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let ck = Checkpoint::initial(small(), PromptSet::default()).unwrap();
        ck.save(&p).unwrap();
        let side = std::fs::read_to_string(sidecar_path(&p)).unwrap();
        assert!(side.contains("learning_rate = 0.0009"));
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    }
}
