//! Single-file binary checkpoints.
//!
//! Layout: magic `SYNTHQCK`, format version (u32 LE), header length (u64 LE),
//! JSON header, parameter count (u64 LE), projection, first and second
//! moments (f64 LE each), a best-snapshot flag byte with an optional best
//! projection, and a trailing SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EncoderShape, Moments, ToyEncoder, TrainConfig, TrainLog, Trainer};

const MAGIC: &[u8; 8] = b"SYNTHQCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint header: {0}")]
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// Decimal `u128`.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, CheckpointError> {
        let bad = |m: &str| CheckpointError::Header(format!("rng state: {m}"));
        let bytes = hex::decode(&self.seed).map_err(|_| bad("seed is not hex"))?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| bad("seed is not 32 bytes"))?;
        let pos: u128 = self.word_pos.parse().map_err(|_| bad("word position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: TrainConfig,
    pub config_hash: String,
    pub data_hash: String,
    pub step: u64,
    pub epoch: u32,
    pub rng: RngState,
    pub shape: EncoderShape,
    pub best_epoch: Option<u32>,
    pub best_ndcg: Option<f64>,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub projection: Vec<f64>,
    pub moments: Moments,
    pub best_projection: Option<Vec<f64>>,
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let bytes = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub(super) fn capture(t: &Trainer<'_>) -> Self {
        Self {
            header: CheckpointHeader {
                config: t.cfg.clone(),
                config_hash: t.config_hash.clone(),
                data_hash: t.data_hash.clone(),
                step: t.step,
                epoch: t.epoch,
                rng: RngState::capture(&t.rng),
                shape: t.encoder.shape(),
                best_epoch: t.best.as_ref().map(|b| b.epoch),
                best_ndcg: t.best.as_ref().map(|b| b.ndcg).filter(|n| n.is_finite()),
                log: t.log.clone(),
            },
            projection: t.encoder.projection.clone(),
            moments: t.moments.clone(),
            best_projection: t.best.as_ref().map(|b| b.projection.clone()),
        }
    }

    /// The best-validation encoder if one was recorded, else the current one.
    pub fn encoder(&self) -> ToyEncoder {
        let s = self.header.shape;
        ToyEncoder {
            hash_dim: s.hash_dim,
            embed_dim: s.embed_dim,
            scale: s.scale,
            projection: self.best_projection.clone().unwrap_or_else(|| self.projection.clone()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let n = self.projection.len();
        let mut out = Vec::with_capacity(64 + header.len() + n * 8 * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        put_f64s(&mut out, &self.projection);
        put_f64s(&mut out, &self.moments.m);
        put_f64s(&mut out, &self.moments.v);
        match &self.best_projection {
            Some(b) => {
                out.push(1);
                put_f64s(&mut out, b);
            }
            None => out.push(0),
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(CheckpointError::Truncated);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Checksum);
        }
        let hlen = r.u64()? as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let n = r.u64()? as usize;
        if n != header.shape.hash_dim * header.shape.embed_dim {
            return Err(CheckpointError::Header("parameter count does not match encoder shape".into()));
        }
        let projection = r.f64s(n)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        let best_projection = match r.take(1)?[0] {
            0 => None,
            1 => Some(r.f64s(n)?),
            _ => return Err(CheckpointError::Header("bad best-snapshot flag".into())),
        };
        if r.pos != body.len() {
            return Err(CheckpointError::Header("trailing bytes".into()));
        }
        Ok(Self {
            header,
            projection,
            moments: Moments { m, v },
            best_projection,
        })
    }

    /// Writes atomically through a temporary file in the target directory.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(&self.to_bytes()).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
