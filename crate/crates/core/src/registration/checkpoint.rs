//! Binary registration checkpoints.
//!
//! Layout, little-endian: magic `SREG`, version `u32`, trajectory key
//! (`u64` length + UTF-8), iteration `u64`, best iteration `u64`, best
//! total `f64`, face count `u64`, then field, first moments, second
//! moments and best field as `9F + 3` `f64` values each, then the history
//! length `u64` and per record the iteration `u64` and seven `f64` values.

use std::path::Path;

use thiserror::Error;

use super::{LossRecord, RegistrationState};
use crate::deform::JacobianField;
use crate::loss::Terms;
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SREG";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated at offset {0}")]
    Truncated(usize),
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint was written with different optimization settings")]
    ConfigMismatch,
    #[error("checkpoint field has {found} faces, source has {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub config_key: String,
    pub state: RegistrationState<T>,
    pub history: Vec<LossRecord>,
}

fn put_field<T: Real>(out: &mut Vec<u8>, f: &JacobianField<T>) {
    for k in 0..f.parameter_count() {
        out.extend_from_slice(&f.get(k).as_f64().to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or(CheckpointError::Truncated(self.pos))?;
        self.pos += N;
        Ok(s.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Corrupt("count overflows".into()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn field<T: Real>(&mut self, faces: usize) -> Result<JacobianField<T>, CheckpointError> {
        let mut f = JacobianField::identity(faces);
        for k in 0..f.parameter_count() {
            *f.get_mut(k) = T::lit(self.f64()?);
        }
        Ok(f)
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_key.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_key.as_bytes());
        out.extend_from_slice(&(s.iteration as u64).to_le_bytes());
        out.extend_from_slice(&(s.best_iteration as u64).to_le_bytes());
        out.extend_from_slice(&s.best_total.to_le_bytes());
        out.extend_from_slice(&(s.field.len() as u64).to_le_bytes());
        for f in [&s.field, &s.m, &s.v, &s.best_field] {
            put_field(&mut out, f);
        }
        out.extend_from_slice(&(self.history.len() as u64).to_le_bytes());
        for r in &self.history {
            out.extend_from_slice(&(r.iteration as u64).to_le_bytes());
            for x in r.terms.as_array().into_iter().chain([r.total, r.grad_norm]) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(r.take()?);
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let key_len = r.usize()?;
        let key = bytes
            .get(r.pos..r.pos.saturating_add(key_len))
            .ok_or(CheckpointError::Truncated(r.pos))?;
        let config_key = String::from_utf8(key.to_vec()).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        r.pos += key_len;
        let iteration = r.usize()?;
        let best_iteration = r.usize()?;
        let best_total = r.f64()?;
        let faces = r.usize()?;
        if faces.saturating_mul(72) > bytes.len() {
            return Err(CheckpointError::Truncated(r.pos));
        }
        let field = r.field(faces)?;
        let m = r.field(faces)?;
        let v = r.field(faces)?;
        let best_field = r.field(faces)?;
        let n = r.usize()?;
        if n.saturating_mul(64) > bytes.len() {
            return Err(CheckpointError::Truncated(r.pos));
        }
        let mut history = Vec::with_capacity(n);
        for _ in 0..n {
            let iteration = r.usize()?;
            let mut x = [0.0; 7];
            for v in &mut x {
                *v = r.f64()?;
            }
            history.push(LossRecord {
                iteration,
                terms: Terms { flow: x[0], chamfer: x[1], normal: x[2], identity: x[3], shear: x[4] },
                total: x[5],
                grad_norm: x[6],
            });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self {
            config_key,
            state: RegistrationState { field, m, v, iteration, best_total, best_iteration, best_field },
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
