//! `CTXEMB1` contextual-embedding files: magic, sequence count, then per
//! sequence a length-prefixed UTF-8 key, token count, dimension and row-major
//! little-endian `f32` values. All integers are little-endian `u32`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::DataError;
use crate::numerics::Tensor;

pub const CTXEMB_MAGIC: &[u8; 7] = b"CTXEMB1";

/// Key of the sequence holding pair `pair_index` of document `doc_id`.
pub fn sequence_key(doc_id: &str, pair_index: usize) -> String {
    format!("{doc_id}#{pair_index}")
}

/// In-memory index of token vectors, upcast to `f64`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CtxEmbIndex {
    dim: Option<usize>,
    entries: BTreeMap<String, Tensor>,
}

impl CtxEmbIndex {
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Tensor> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DataError> {
        if self.buf.len() - self.pos < n {
            return Err(DataError::TruncatedPayload { offset: self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_ctxemb(buf: &[u8]) -> Result<CtxEmbIndex, DataError> {
    let mut c = Cursor { buf, pos: 0 };
    if buf.len() < CTXEMB_MAGIC.len() || &buf[..CTXEMB_MAGIC.len()] != CTXEMB_MAGIC {
        return Err(DataError::BadMagic);
    }
    c.pos = CTXEMB_MAGIC.len();
    let count = c.u32()?;
    let mut index = CtxEmbIndex::default();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let at = c.pos;
        let key = std::str::from_utf8(c.take(len)?)
            .map_err(|_| DataError::InvalidUtf8 { offset: at })?
            .to_string();
        let tokens = c.u32()? as usize;
        let dim = c.u32()? as usize;
        match index.dim {
            Some(d) if d != dim => {
                return Err(DataError::DimensionMismatch {
                    key,
                    expected: d,
                    found: dim,
                })
            }
            _ => index.dim = Some(dim),
        }
        let bytes = tokens
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(DataError::TruncatedPayload { offset: c.pos })?;
        let raw = c.take(bytes)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        index.entries.insert(key, Tensor::from_vec(tokens, dim, data).unwrap());
    }
    if c.pos != buf.len() {
        return Err(DataError::TrailingBytes { offset: c.pos });
    }
    Ok(index)
}

pub fn load_ctxemb(path: impl AsRef<Path>) -> Result<CtxEmbIndex, DataError> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_ctxemb(&buf)
}

/// Writes `(key, tokens x dim)` sequences; values are narrowed to `f32`.
pub fn write_ctxemb<'a>(
    entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    mut w: impl Write,
) -> std::io::Result<()> {
    let entries: Vec<_> = entries.into_iter().collect();
    w.write_all(CTXEMB_MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (key, t) in entries {
        w.write_all(&(key.len() as u32).to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let a = Tensor::from_vec(2, 3, vec![0.5, 1.0, -2.0, 0.25, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_ctxemb([("d1#0", &a), ("d2#0", &b)], &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip() {
        let idx = read_ctxemb(&sample()).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.dim(), Some(3));
        assert_eq!(idx.get("d1#0").unwrap().get(1, 1), 3.0);
    }

    #[test]
    fn empty_file_is_valid() {
        let mut buf = Vec::new();
        write_ctxemb(std::iter::empty(), &mut buf).unwrap();
        let idx = read_ctxemb(&buf).unwrap();
        assert!(idx.is_empty());
        assert_eq!(idx.dim(), None);
    }

    #[test]
    fn corruption_is_reported() {
        let buf = sample();
        let cut = &buf[..buf.len() - 2];
        assert!(matches!(read_ctxemb(cut), Err(DataError::TruncatedPayload { .. })));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_ctxemb(&bad), Err(DataError::BadMagic)));
        // second entry claims dim 4
        let mut mixed = Vec::new();
        let a = Tensor::zeros(1, 3);
        let b = Tensor::zeros(1, 4);
        write_ctxemb([("a", &a), ("b", &b)], &mut mixed).unwrap();
        assert!(matches!(
            read_ctxemb(&mixed),
            Err(DataError::DimensionMismatch { expected: 3, found: 4, .. })
        ));
    }
}
