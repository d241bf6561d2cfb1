//! Checkpoint container and its on-disk format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       4 bytes  "CKDV"
//! version     u16
//! header_len  u32      followed by header JSON
//! n_entries   u32
//! entry       name_len u16, name utf-8, ndim u8, dims u64…,
//!             dtype u8 (0 = f64), offset u64 (into payload)
//! payload     raw f64 little-endian values
//! ```
//!
//! The header JSON carries the model config, the encoder-pretrained
//! flag, and the provenance history. Payloads are always f64 so a
//! save/load round trip is bit-exact; the dtype byte is reserved for
//! narrower storage.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{build_model, ModelConfig, TinyVlm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKDV";
pub const CHECKPOINT_VERSION: u16 = 1;

const DTYPE_F64: u8 = 0;

/// Which pipeline step produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTag {
    Init,
    EncoderProxy,
    Pt,
    Ft,
    Dpt,
    Sft,
    Dft,
}

impl StepTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepTag::Init => "init",
            StepTag::EncoderProxy => "encoder_proxy",
            StepTag::Pt => "PT",
            StepTag::Ft => "FT",
            StepTag::Dpt => "DPT",
            StepTag::Sft => "SFT",
            StepTag::Dft => "DFT",
        }
    }
}

impl std::fmt::Display for StepTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Producing step and cascade stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceTag {
    pub step: StepTag,
    pub stage: u32,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    encoder_pretrained: bool,
    history: Vec<ProvenanceTag>,
}

/// A serialized model: config, provenance, named parameter tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub encoder_pretrained: bool,
    pub history: Vec<ProvenanceTag>,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            encoder_pretrained: self.encoder_pretrained,
            history: self.history.clone(),
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        let mut offset: u64 = 0;
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.push(DTYPE_F64);
            out.extend_from_slice(&offset.to_le_bytes());
            offset += (t.numel() * 8) as u64;
        }
        for (_, t) in &self.params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointFormat(format!("bad magic {magic:x?}")));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)?;
        let n = r.u32()? as usize;
        let mut table = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|e| Error::CheckpointFormat(e.to_string()))?;
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let dtype = r.u8()?;
            if dtype != DTYPE_F64 {
                return Err(Error::CheckpointFormat(format!("unsupported dtype {dtype}")));
            }
            let offset = r.u64()? as usize;
            table.push((name, shape, offset));
        }
        let payload = &bytes[r.pos..];
        let mut params = Vec::with_capacity(n);
        for (name, shape, offset) in table {
            let numel: usize = shape.iter().product();
            let end = offset + numel * 8;
            if end > payload.len() {
                return Err(Error::CheckpointFormat(format!(
                    "payload for `{name}` out of bounds ({end} > {})",
                    payload.len()
                )));
            }
            let data: Vec<f64> = payload[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            params.push((name, Tensor::new(shape, data)?));
        }
        Ok(Checkpoint {
            config: header.config,
            encoder_pretrained: header.encoder_pretrained,
            history: header.history,
            params,
        })
    }

    /// SHA-256 of the serialized checkpoint, for manifests and stage
    /// records.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        let mut h = Sha256::new();
        h.update(&bytes);
        Ok(hex::encode(h.finalize()))
    }

    pub fn last_tag(&self) -> ProvenanceTag {
        *self.history.last().expect("history never empty")
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.numel()).sum()
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointFormat("truncated checkpoint".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint<P: AsRef<Path>>(path: P, ckpt: &Checkpoint) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

impl TinyVlm {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            encoder_pretrained: self.encoder_pretrained,
            history: self.history.clone(),
            params: self.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        }
    }

    /// Rebuild a model from a checkpoint, validating that the parameter
    /// set matches the config exactly.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<TinyVlm> {
        let mut model = build_model(&ckpt.config)?;
        let expected: Vec<String> = model.named_params().iter().map(|(n, _)| n.clone()).collect();
        let got: Vec<&String> = ckpt.params.iter().map(|(n, _)| n).collect();
        if expected.len() != got.len() || expected.iter().zip(&got).any(|(a, b)| &a != b) {
            return Err(Error::CheckpointFormat(
                "parameter table does not match the config's parameter set".into(),
            ));
        }
        for ((name, dst), (_, src)) in model.named_params_mut().into_iter().zip(&ckpt.params) {
            if dst.shape() != src.shape() {
                return Err(Error::CheckpointFormat(format!(
                    "shape of `{name}`: checkpoint {:?} vs config {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        model.encoder_pretrained = ckpt.encoder_pretrained;
        model.history = ckpt.history.clone();
        Ok(model)
    }
}
