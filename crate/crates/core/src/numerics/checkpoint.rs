//! Binary parameter checkpoints: `SEMSINCK`, format version, then one blob per
//! parameter (name, shape, little-endian `f64` values) in registration order.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMSINCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint does not match the model: {0}")]
    Incompatible(String),
}

pub fn write_checkpoint(store: &ParamStore, mut w: impl Write) -> Result<(), CheckpointError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ParamStore, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let ndim = read_u32(&mut r)?;
        if ndim != 2 {
            return Err(CheckpointError::Malformed(format!("{name}: {ndim} dimensions")));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        store.add(name, Tensor::from_vec(rows, cols, data).unwrap());
    }
    Ok(store)
}

/// Copies checkpoint values into `target`, requiring identical names and
/// shapes in the same order.
pub fn restore_into(target: &mut ParamStore, loaded: &ParamStore) -> Result<(), CheckpointError> {
    if target.len() != loaded.len() {
        return Err(CheckpointError::Incompatible(format!(
            "{} parameters expected, {} found",
            target.len(),
            loaded.len()
        )));
    }
    let ids: Vec<_> = target.ids().collect();
    for id in ids {
        let (name, src) = (loaded.name(id), loaded.get(id));
        if name != target.name(id) || src.shape() != target.get(id).shape() {
            return Err(CheckpointError::Incompatible(format!(
                "{} {:?} vs {} {:?}",
                target.name(id),
                target.get(id).shape(),
                name,
                src.shape()
            )));
        }
        *target.get_mut(id) = src.clone();
    }
    Ok(())
}
