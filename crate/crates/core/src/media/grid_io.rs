//! Binary grid container.
//!
//! Layout: 8-byte magic `NMGRID01`, little-endian `u32` nx, ny, nz and
//! channel count, 8 reserved zero bytes (32-byte header in total), then
//! `nx * ny * nz * channels` little-endian `f32` values, x fastest, channels
//! interleaved as `(sigma, aR, aG, aB, g)`.

use std::fs;
use std::path::Path;

use super::field::{GridField, GRID_CHANNELS};
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 8] = b"NMGRID01";
pub const GRID_HEADER_LEN: usize = 32;

pub fn encode_grid(grid: &GridField) -> Vec<u8> {
    let res = grid.res();
    let mut out = Vec::with_capacity(GRID_HEADER_LEN + grid.data().len() * 4);
    out.extend_from_slice(GRID_MAGIC);
    for v in [res[0], res[1], res[2], GRID_CHANNELS] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&[0u8; 8]);
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<GridField> {
    if bytes.len() < GRID_HEADER_LEN {
        return Err(Error::Parse("grid file shorter than its header".into()));
    }
    if &bytes[..8] != GRID_MAGIC {
        return Err(Error::Parse("bad grid magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (nx, ny, nz, ch) = (word(0), word(1), word(2), word(3));
    if ch != GRID_CHANNELS {
        return Err(Error::Parse(format!("grid has {ch} channels, expected {GRID_CHANNELS}")));
    }
    let count = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .and_then(|v| v.checked_mul(ch))
        .ok_or_else(|| Error::Parse("grid dimensions overflow".into()))?;
    let payload = &bytes[GRID_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Parse(format!(
            "grid payload is {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GridField::new([nx, ny, nz], data)
}

pub fn write_grid(path: &Path, grid: &GridField) -> Result<()> {
    fs::write(path, encode_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<GridField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}
