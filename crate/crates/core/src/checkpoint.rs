//! Binary checkpoints.
//!
//! Layout: magic `VSIM`, `u32` version, `u32` record count, then per record a
//! `u32`-length-prefixed UTF-8 name, a `u32`-count-prefixed list of `u32` dims
//! and the `f32` data. Every integer and float is little-endian.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ArchConfig, Vae};
use crate::nn::{Module, Param};
use crate::proto::{EmaConvention, PrototypeBank, SimilarityMode};

pub const MAGIC: &[u8; 4] = b"VSIM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Record {
    pub fn scalar(name: &str, v: f32) -> Self {
        Self {
            name: name.into(),
            dims: Vec::new(),
            data: vec![v],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("missing record `{name}`")))
    }

    fn scalar(&self, name: &str) -> Result<f32> {
        let r = self.get(name)?;
        match r.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Format(format!("record `{name}` is not a scalar"))),
        }
    }

    fn count(&self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Format(format!("record `{name}` = {v} is not a count")));
        }
        Ok(v as usize)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
            for d in &r.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version > VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if version == 0 {
            return Err(Error::Format("version 0".into()));
        }
        let n = cur.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| Error::Format("record name is not UTF-8".into()))?
                .to_string();
            let nd = cur.u32()? as usize;
            let mut dims = Vec::with_capacity(nd.min(16));
            for _ in 0..nd {
                dims.push(cur.u32()?);
            }
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| Error::Format(format!("record `{name}` size overflows")))?;
            let raw = cur.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| Error::Format("size overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            records.push(Record { name, dims, data });
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last record",
                bytes.len() - cur.pos
            )));
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Everything needed to resume evaluation: network, prototypes and schedule position.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub vae: Vae<f32>,
    /// `None` for the unconditional baseline.
    pub bank: Option<PrototypeBank<f32>>,
    pub tau: f64,
    pub epoch: usize,
}

impl ModelState {
    pub fn to_checkpoint(&mut self) -> Checkpoint {
        let a = &self.vae.arch;
        let mut records = vec![
            Record::scalar("meta.in_channels", a.in_channels as f32),
            Record::scalar("meta.image_size", a.image_size as f32),
            Record::scalar("meta.latent_dim", a.latent_dim as f32),
            Record::scalar("meta.cond_dim", a.cond_dim as f32),
            Record {
                name: "meta.enc_channels".into(),
                dims: vec![3],
                data: a.enc_channels.iter().map(|&c| c as f32).collect(),
            },
            Record {
                name: "meta.dec_channels".into(),
                dims: vec![3],
                data: a.dec_channels.iter().map(|&c| c as f32).collect(),
            },
            Record::scalar("schedule.tau", self.tau as f32),
            Record::scalar("schedule.epoch", self.epoch as f32),
        ];
        if let Some(bank) = &self.bank {
            let q = bank.prototypes();
            records.push(Record {
                name: "prototypes.Q".into(),
                dims: vec![q.rows as u32, q.cols as u32],
                data: q.data.clone(),
            });
            records.push(Record::scalar("prototypes.eta", bank.eta as f32));
            records.push(Record::scalar(
                "prototypes.similarity",
                match bank.similarity_mode {
                    SimilarityMode::Cosine => 0.0,
                    SimilarityMode::Dot => 1.0,
                },
            ));
            records.push(Record::scalar(
                "prototypes.ema_convention",
                match bank.convention {
                    EmaConvention::Paper => 0.0,
                    EmaConvention::Standard => 1.0,
                },
            ));
        }
        let mut push = |p: &mut Param<f32>| {
            records.push(Record {
                name: p.name.clone(),
                dims: p.dims.iter().map(|&d| d as u32).collect(),
                data: p.value.clone(),
            })
        };
        self.vae.visit_params(&mut push);
        self.vae.visit_buffers(&mut push);
        Checkpoint { records }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let triple = |name: &str| -> Result<[usize; 3]> {
            let r = ck.get(name)?;
            match r.data.as_slice() {
                [a, b, c] => Ok([*a as usize, *b as usize, *c as usize]),
                _ => Err(Error::Format(format!("record `{name}` needs 3 values"))),
            }
        };
        let arch = ArchConfig {
            in_channels: ck.count("meta.in_channels")?,
            image_size: ck.count("meta.image_size")?,
            latent_dim: ck.count("meta.latent_dim")?,
            cond_dim: ck.count("meta.cond_dim")?,
            enc_channels: triple("meta.enc_channels")?,
            dec_channels: triple("meta.dec_channels")?,
        };
        let mut vae = Vae::new(arch.clone(), &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| Error::Format(format!("invalid architecture: {e}")))?;
        let mut failure = None;
        let mut load = |p: &mut Param<f32>| {
            if failure.is_some() {
                return;
            }
            match ck.get(&p.name) {
                Ok(r) if r.dims.iter().map(|&d| d as usize).eq(p.dims.iter().copied()) => {
                    p.value.copy_from_slice(&r.data)
                }
                Ok(r) => {
                    failure = Some(Error::Format(format!(
                        "record `{}` has dims {:?}, expected {:?}",
                        p.name, r.dims, p.dims
                    )))
                }
                Err(e) => failure = Some(e),
            }
        };
        vae.visit_params(&mut load);
        vae.visit_buffers(&mut load);
        if let Some(e) = failure {
            return Err(e);
        }
        let bank = if arch.cond_dim > 0 {
            let r = ck.get("prototypes.Q")?;
            if r.dims != [arch.cond_dim as u32, arch.latent_dim as u32] {
                return Err(Error::Format(format!("prototypes.Q has dims {:?}", r.dims)));
            }
            let q = Matrix::new(r.data.clone(), arch.cond_dim, arch.latent_dim)?;
            let similarity = if ck.scalar("prototypes.similarity")? == 0.0 {
                SimilarityMode::Cosine
            } else {
                SimilarityMode::Dot
            };
            let convention = if ck.scalar("prototypes.ema_convention")? == 0.0 {
                EmaConvention::Paper
            } else {
                EmaConvention::Standard
            };
            let eta = (ck.scalar("prototypes.eta")? as f64).clamp(0.0, 1.0);
            Some(
                PrototypeBank::from_matrix(q, eta)
                    .map_err(|e| Error::Format(e.to_string()))?
                    .with_similarity(similarity)
                    .with_convention(convention),
            )
        } else {
            None
        };
        Ok(Self {
            vae,
            bank,
            tau: ck.scalar("schedule.tau")? as f64,
            epoch: ck.count("schedule.epoch")?,
        })
    }
}

pub fn save_checkpoint(state: &mut ModelState, path: &Path) -> Result<()> {
    state.to_checkpoint().save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    ModelState::from_checkpoint(&Checkpoint::load(path)?)
}
