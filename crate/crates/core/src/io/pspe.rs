//! Little-endian binary containers.
//!
//! PSPE (embeddings):
//!
//! ```text
//! "PSPE" | u32 version=1 | u32 count | u32 dim
//! count x ( u32 id_len | id_len bytes UTF-8 | dim x f32 )
//! ```
//!
//! PSPW (scorer weights):
//!
//! ```text
//! "PSPW" | u32 version=1 | u32 d | u32 h | h*d f32 (W1) | h*h f32 (W2) | h f32 (W3)
//! ```
//!
//! Matrices are row-major.

use std::path::Path;

use crate::features::EmbeddingTable;
use crate::scorer::ScorerParams;
use crate::{Error, Result, Scalar};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"PSPE";
pub const PARAMS_MAGIC: [u8; 4] = *b"PSPW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileHeader {
    pub magic: [u8; 4],
    pub version: u32,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::Truncated(format!("{what}: size overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn header(&mut self, expected: [u8; 4]) -> Result<FileHeader> {
        let m = self.take(4, "magic")?;
        let magic = [m[0], m[1], m[2], m[3]];
        if magic != expected {
            return Err(Error::BadMagic {
                expected,
                found: magic,
            });
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(FileHeader { magic, version })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, xs: &[T]) {
    for &x in xs {
        out.extend_from_slice(&x.as_f32().to_le_bytes());
    }
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::InvalidConfig(format!("{what} {n} exceeds u32")))
}

pub fn encode_embeddings<T: Scalar>(table: &EmbeddingTable<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + table.len() * (8 + 4 * table.dim()));
    out.extend_from_slice(&EMBEDDING_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(table.len(), "count")?);
    put_u32(&mut out, to_u32(table.dim(), "dim")?);
    for (id, v) in table.iter() {
        put_u32(&mut out, to_u32(id.len(), "id length")?);
        out.extend_from_slice(id.as_bytes());
        put_f32s(&mut out, v);
    }
    Ok(out)
}

/// Decodes a PSPE buffer. Vectors are returned exactly as stored.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingTable<f32>> {
    let mut c = Cursor::new(bytes);
    c.header(EMBEDDING_MAGIC)?;
    let count = c.u32("count")? as usize;
    let dim = c.u32("dim")? as usize;
    let min_record = 4usize.saturating_add(dim.saturating_mul(4));
    if count > c.remaining() / min_record {
        return Err(Error::Truncated(format!(
            "header claims {count} entries but only {} bytes follow",
            c.remaining()
        )));
    }
    let mut table = EmbeddingTable::new(dim);
    for i in 0..count {
        let len = c.u32("id length")? as usize;
        let id = std::str::from_utf8(c.take(len, "id")?)
            .map_err(|_| Error::UnsupportedFormat(format!("entry {i}: id is not UTF-8")))?
            .to_string();
        let v = c.f32s(dim, "vector")?;
        table.insert(id, v)?;
    }
    Ok(table)
}

pub fn write_embeddings<T: Scalar>(path: impl AsRef<Path>, table: &EmbeddingTable<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_embeddings(table)?).map_err(|e| Error::file(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable<f32>> {
    let path = path.as_ref();
    decode_embeddings(&std::fs::read(path).map_err(|e| Error::file(path, e))?)
}

pub fn encode_params<T: Scalar>(params: &ScorerParams<T>) -> Result<Vec<u8>> {
    let (d, h) = (params.dim(), params.hidden());
    let mut out = Vec::with_capacity(16 + 4 * (h * d + h * h + h));
    out.extend_from_slice(&PARAMS_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(d, "d")?);
    put_u32(&mut out, to_u32(h, "h")?);
    put_f32s(&mut out, params.w1());
    put_f32s(&mut out, params.w2());
    put_f32s(&mut out, params.w3());
    Ok(out)
}

pub fn decode_params<T: Scalar>(bytes: &[u8]) -> Result<ScorerParams<T>> {
    let mut c = Cursor::new(bytes);
    c.header(PARAMS_MAGIC)?;
    let d = c.u32("d")? as usize;
    let h = c.u32("h")? as usize;
    let total = h
        .checked_mul(d)
        .and_then(|a| h.checked_mul(h).and_then(|b| a.checked_add(b)))
        .and_then(|a| a.checked_add(h))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Truncated("weight count overflows".into()))?;
    if total > c.remaining() {
        return Err(Error::Truncated(format!(
            "need {total} weight bytes, have {}",
            c.remaining()
        )));
    }
    let cast = |v: Vec<f32>| v.into_iter().map(T::widen_f32).collect::<Vec<T>>();
    let w1 = cast(c.f32s(h * d, "W1")?);
    let w2 = cast(c.f32s(h * h, "W2")?);
    let w3 = cast(c.f32s(h, "W3")?);
    ScorerParams::from_parts(d, h, w1, w2, w3)
}

pub fn write_params<T: Scalar>(path: impl AsRef<Path>, params: &ScorerParams<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_params(params)?).map_err(|e| Error::file(path, e))
}

pub fn read_params<T: Scalar>(path: impl AsRef<Path>) -> Result<ScorerParams<T>> {
    let path = path.as_ref();
    decode_params(&std::fs::read(path).map_err(|e| Error::file(path, e))?)
}
