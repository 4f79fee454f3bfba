//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `NMCKPT01`, `u32` version, `u64`
//! iteration, `u64` optimizer step count, `u32` block count, then per block
//! `u32` name length, UTF-8 name, `u32` rows, `u32` cols, a `u8` flag
//! telling whether optimizer moments follow, the values as `f32`, and if
//! flagged the first and second moments as `f32`.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::params::{ParamBlock, ParamSet};
use super::real::Real;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NMCKPT01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub params: ParamSet<f32>,
    pub adam: Option<AdamState<f32>>,
}

pub fn encode_checkpoint<T: Real>(params: &ParamSet<T>, adam: Option<&AdamState<T>>, iteration: u64) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&iteration.to_le_bytes());
    out.extend_from_slice(&adam.map_or(0, |a| a.t).to_le_bytes());
    out.extend_from_slice(&(params.blocks.len() as u32).to_le_bytes());
    let put = |out: &mut Vec<u8>, vals: &[T]| {
        for v in vals {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    };
    for (k, b) in params.blocks.iter().enumerate() {
        out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
        out.extend_from_slice(b.name.as_bytes());
        out.extend_from_slice(&(b.rows as u32).to_le_bytes());
        out.extend_from_slice(&(b.cols as u32).to_le_bytes());
        out.push(adam.is_some() as u8);
        put(&mut out, &b.value);
        if let Some(a) = adam {
            put(&mut out, &a.m[k]);
            put(&mut out, &a.v[k]);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Parse("block size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let iteration = r.u64()?;
    let t = r.u64()?;
    let n = r.u32()? as usize;
    let mut params = ParamSet::new();
    let (mut m, mut v) = (Vec::new(), Vec::new());
    let mut with_moments = None;
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Parse("block name is not UTF-8".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let flag = r.take(1)?[0] != 0;
        if *with_moments.get_or_insert(flag) != flag {
            return Err(Error::Parse("inconsistent optimizer moment flags".into()));
        }
        let count = rows.checked_mul(cols).ok_or_else(|| Error::Parse("block shape overflow".into()))?;
        let value = r.f32s(count)?;
        if flag {
            m.push(r.f32s(count)?);
            v.push(r.f32s(count)?);
        }
        params.blocks.push(ParamBlock {
            name,
            rows,
            cols,
            grad: vec![0.0; count],
            value,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse("trailing bytes after checkpoint".into()));
    }
    params.check_finite()?;
    let adam = with_moments.unwrap_or(false).then_some(AdamState { m, v, t });
    Ok(Checkpoint { iteration, params, adam })
}

/// Writes atomically via a temporary file in the same directory.
pub fn write_checkpoint<T: Real>(path: &Path, params: &ParamSet<T>, adam: Option<&AdamState<T>>, iteration: u64) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(params, adam, iteration)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
