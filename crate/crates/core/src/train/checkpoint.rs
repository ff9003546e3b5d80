//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "CCEMBED\0"
//! version    u32
//! config     u32 length + JSON {model, meta, code_vocab, output_vocab}
//! tensors    u32 count, then per tensor:
//!              u32 name length + name, u8 component, u8 precision,
//!              u32 rank, u64 per dimension, raw values
//! checksum   32 bytes, SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CodeChangeEmbedder, ModelConfig};
use crate::nn::{Component, ParamStore, Precision, Real, Tensor};
use crate::tokenize::Vocabulary;

pub const MAGIC: &[u8; 8] = b"CCEMBED\0";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrained,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub stage: Stage,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_valid_loss: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub model: CodeChangeEmbedder<T>,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: TrainMeta,
    code_vocab: Vec<String>,
    output_vocab: Vec<String>,
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Integrity(format!(
                "unexpected end of checkpoint at byte {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Validation(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = Header {
            model: self.model.config().clone(),
            meta: self.meta.clone(),
            code_vocab: self.model.code_vocab().tokens().to_vec(),
            output_vocab: self.model.output_vocab().tokens().to_vec(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Validation(e.to_string()))?;
        put_u32(&mut out, json.len())?;
        out.extend_from_slice(&json);

        let entries = self.model.params().entries();
        put_u32(&mut out, entries.len())?;
        for e in entries {
            put_u32(&mut out, e.name.len())?;
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.tag.code());
            out.push(T::PRECISION.code());
            put_u32(&mut out, e.tensor.shape().len())?;
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in e.tensor.data() {
                v.write_le(&mut out);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    /// Parses a checkpoint. The version is checked before the checksum so a
    /// newer file reports a version error rather than corruption.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 + CHECKSUM_LEN {
            return Err(Error::Integrity("checkpoint is truncated".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(Error::Integrity("checksum mismatch".into()));
        }

        let mut r = Reader { bytes: body, pos: 12 };
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Integrity(format!("config block: {e}")))?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::<T>::new();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?
                .to_string();
            let tag = Component::from_code(r.u8()?)
                .ok_or_else(|| Error::Integrity(format!("tensor {name} has no valid component tag")))?;
            let precision = Precision::from_code(r.u8()?)
                .ok_or_else(|| Error::Integrity(format!("tensor {name} has an unknown precision")))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let width = precision.code() as usize;
            let raw = r.take(len * width)?;
            let data: Vec<T> = match precision {
                Precision::F32 => raw.chunks_exact(4).map(|c| T::from_f64(f32::read_le(c) as f64)).collect(),
                Precision::F64 => raw.chunks_exact(8).map(|c| T::from_f64(f64::read_le(c))).collect(),
            };
            params.add(name, tag, Tensor::new(shape, data)?)?;
        }
        if r.pos != body.len() {
            return Err(Error::Integrity(format!(
                "{} trailing bytes after tensor records",
                body.len() - r.pos
            )));
        }
        let model = CodeChangeEmbedder::from_parts(
            header.model,
            params,
            Vocabulary::from_tokens(header.code_vocab)?,
            Vocabulary::from_tokens(header.output_vocab)?,
        )?;
        Ok(Checkpoint {
            model,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::EditForm;
    use crate::tokenize::build_vocabulary;

    fn sample(seed: u64) -> Checkpoint<f32> {
        let corpus = [vec!["a".to_string(), "b".into(), "if".into()]];
        let v = build_vocabulary(corpus.iter().map(Vec::as_slice), 100, 1).unwrap();
        let model = CodeChangeEmbedder::new(ModelConfig::tiny(EditForm::Compressed, seed), v.clone(), v).unwrap();
        Checkpoint {
            model,
            meta: TrainMeta {
                stage: Stage::Pretrained,
                best_epoch: 3,
                epochs_run: 8,
                best_valid_loss: Some(0.1 + 0.2),
                seed,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample(5);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupted_tail_is_an_integrity_error() {
        let mut bytes = sample(1).to_bytes().unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0xff;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes), Err(Error::Integrity(_))));
        let mut body = sample(1).to_bytes().unwrap();
        body[40] ^= 0x01;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&body), Err(Error::Integrity(_))));
    }

    #[test]
    fn truncated_file_is_an_integrity_error() {
        let bytes = sample(2).to_bytes().unwrap();
        for cut in [10, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::<f32>::from_bytes(&bytes[..cut]),
                Err(Error::Integrity(_))
            ));
        }
    }

    #[test]
    fn newer_version_is_rejected_by_number() {
        let mut bytes = sample(3).to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        match Checkpoint::<f32>::from_bytes(&bytes) {
            Err(Error::Version { found, expected }) => {
                assert_eq!((found, expected), (FORMAT_VERSION + 1, FORMAT_VERSION));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample(4);
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::<f32>::load(&path).unwrap(), c);
    }
}
