//! On-disk formats.
//!
//! Grid dumps are a 64-byte little-endian header followed by the samples as
//! little-endian `f64`:
//!
//! | offset | type  | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | [u8;4]| magic `VCTL`                            |
//! | 4      | u32   | format version (1)                      |
//! | 8      | u32   | kind (1 scalar, 2 fields, 3 density)    |
//! | 12     | u32   | `nx`                                    |
//! | 16     | u32   | `np` (0 for spatial data)               |
//! | 20     | u32   | number of components                    |
//! | 24     | f64   | spatial half-width                      |
//! | 32     | f64   | momentum half-width                     |
//! | 40     | f64   | time                                    |
//! | 48     | u64   | time index                              |
//! | 56     | -     | zero padding                            |
//!
//! Components are stored one after another, each in the row-major order of
//! the in-memory arrays.

use crate::error::{AppError, AppResult};
use std::fs;
use std::io::Write;
use std::path::Path;
use vctl_core::distribution::Distribution;
use vctl_core::field::{FieldState, ScalarField};
use vctl_core::grid::PhaseGrid;

pub const MAGIC: &[u8; 4] = b"VCTL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Scalar = 1,
    Fields = 2,
    Density = 3,
}

impl Kind {
    fn from_u32(v: u32) -> Option<Self> {
        match v {
            1 => Some(Kind::Scalar),
            2 => Some(Kind::Fields),
            3 => Some(Kind::Density),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub kind: Kind,
    pub nx: u32,
    pub np: u32,
    pub ncomp: u32,
    pub x_extent: f64,
    pub p_extent: f64,
    pub time: f64,
    pub time_index: u64,
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..8].copy_from_slice(&VERSION.to_le_bytes());
        b[8..12].copy_from_slice(&(self.kind as u32).to_le_bytes());
        b[12..16].copy_from_slice(&self.nx.to_le_bytes());
        b[16..20].copy_from_slice(&self.np.to_le_bytes());
        b[20..24].copy_from_slice(&self.ncomp.to_le_bytes());
        b[24..32].copy_from_slice(&self.x_extent.to_le_bytes());
        b[32..40].copy_from_slice(&self.p_extent.to_le_bytes());
        b[40..48].copy_from_slice(&self.time.to_le_bytes());
        b[48..56].copy_from_slice(&self.time_index.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, String> {
        if b.len() < HEADER_LEN {
            return Err(format!("file is shorter than the {HEADER_LEN}-byte header"));
        }
        if &b[0..4] != MAGIC {
            return Err("bad magic (not a VCTL grid file)".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let kind = Kind::from_u32(u32_at(8)).ok_or_else(|| format!("unknown data kind {}", u32_at(8)))?;
        Ok(Header {
            kind,
            nx: u32_at(12),
            np: u32_at(16),
            ncomp: u32_at(20),
            x_extent: f64_at(24),
            p_extent: f64_at(32),
            time: f64_at(40),
            time_index: u64::from_le_bytes(b[48..56].try_into().unwrap()),
        })
    }

    fn samples(&self) -> usize {
        let nx = self.nx as usize;
        let np = self.np as usize;
        let per = if self.kind == Kind::Density { nx * nx * np * np } else { nx * nx };
        per * self.ncomp as usize
    }
}

fn encode(header: &Header, parts: &[&[f64]]) -> Vec<u8> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(&header.to_bytes());
    for p in parts {
        for v in *p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let mut f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}

/// Reads a grid file, returning the header and the raw samples.
pub fn read_grid_file(path: &Path) -> AppResult<(Header, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    let fmt = |message: String| AppError::Format { path: path.into(), message };
    let header = Header::from_bytes(&bytes).map_err(fmt)?;
    let body = &bytes[HEADER_LEN..];
    let expected = header.samples();
    if body.len() != 8 * expected {
        return Err(fmt(format!("expected {} samples, found {} bytes of data", expected, body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, data))
}

pub fn write_scalar(path: &Path, field: &ScalarField, x_extent: f64, time: f64, time_index: usize) -> AppResult<()> {
    let h = Header {
        kind: Kind::Scalar,
        nx: field.n as u32,
        np: 0,
        ncomp: 1,
        x_extent,
        p_extent: 0.0,
        time,
        time_index: time_index as u64,
    };
    write_file(path, &encode(&h, &[&field.data]))
}

pub fn read_scalar(path: &Path, nx: usize) -> AppResult<(Header, ScalarField)> {
    let (h, data) = read_grid_file(path)?;
    if h.kind != Kind::Scalar || h.nx as usize != nx || h.ncomp != 1 {
        return Err(AppError::Format {
            path: path.into(),
            message: format!("expected a scalar field on {nx}x{nx}, found {:?} on {}x{}", h.kind, h.nx, h.nx),
        });
    }
    Ok((h, ScalarField { n: nx, data }))
}

/// Writes `(e1, e2, b)` as three components.
pub fn write_fields(path: &Path, fields: &FieldState, x_extent: f64, time: f64, time_index: usize) -> AppResult<()> {
    let h = Header {
        kind: Kind::Fields,
        nx: fields.n() as u32,
        np: 0,
        ncomp: 3,
        x_extent,
        p_extent: 0.0,
        time,
        time_index: time_index as u64,
    };
    write_file(path, &encode(&h, &[&fields.e1.data, &fields.e2.data, &fields.b.data]))
}

pub fn read_fields(path: &Path) -> AppResult<(Header, FieldState)> {
    let (h, data) = read_grid_file(path)?;
    if h.kind != Kind::Fields || h.ncomp != 3 {
        return Err(AppError::Format { path: path.into(), message: format!("expected field data, found {:?}", h.kind) });
    }
    let n = h.nx as usize;
    let m = n * n;
    let mut fs = FieldState::zeros(n);
    fs.e1.data.copy_from_slice(&data[..m]);
    fs.e2.data.copy_from_slice(&data[m..2 * m]);
    fs.b.data.copy_from_slice(&data[2 * m..]);
    Ok((h, fs))
}

pub fn write_density(path: &Path, f: &Distribution, time_index: usize) -> AppResult<()> {
    let g = f.grid;
    let h = Header {
        kind: Kind::Density,
        nx: g.nx as u32,
        np: g.np as u32,
        ncomp: 1,
        x_extent: g.x_extent,
        p_extent: g.p_extent,
        time: g.time(time_index),
        time_index: time_index as u64,
    };
    write_file(path, &encode(&h, &[&f.values]))
}

pub fn read_density(path: &Path, grid: PhaseGrid) -> AppResult<(Header, Distribution)> {
    let (h, data) = read_grid_file(path)?;
    if h.kind != Kind::Density || h.nx as usize != grid.nx || h.np as usize != grid.np {
        return Err(AppError::Format {
            path: path.into(),
            message: format!("expected a density on nx = {}, np = {}, found {:?} with nx = {}, np = {}", grid.nx, grid.np, h.kind, h.nx, h.np),
        });
    }
    Ok((h, Distribution { grid, values: data }))
}

/// Name of the per-step snapshot file of a given prefix.
pub fn step_file(prefix: &str, k: usize) -> String {
    format!("{prefix}_{k:05}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = Header { kind: Kind::Density, nx: 16, np: 8, ncomp: 1, x_extent: 4.5, p_extent: 3.0, time: 0.25, time_index: 7 };
        let b = h.to_bytes();
        assert_eq!(&b[..4], b"VCTL");
        assert_eq!(Header::from_bytes(&b).unwrap(), h);
        let mut bad = b;
        bad[0] = b'X';
        assert!(Header::from_bytes(&bad).is_err());
    }

    #[test]
    fn scalar_and_fields_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = ScalarField::from_fn(8, |i, j| i as f64 - 0.5 * j as f64);
        let p = dir.path().join("s.bin");
        write_scalar(&p, &s, 2.0, 0.5, 3).unwrap();
        let (h, r) = read_scalar(&p, 8).unwrap();
        assert_eq!(r, s);
        assert_eq!((h.time_index, h.time), (3, 0.5));
        assert_eq!(fs::metadata(&p).unwrap().len(), 64 + 8 * 64);
        let mut f = FieldState::zeros(8);
        f.b = s.clone();
        f.e1.data[5] = 1.5;
        let p = dir.path().join("f.bin");
        write_fields(&p, &f, 2.0, 0.0, 0).unwrap();
        assert_eq!(read_fields(&p).unwrap().1, f);
        assert!(read_scalar(&p, 8).is_err());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        write_scalar(&p, &ScalarField::zeros(8), 1.0, 0.0, 0).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let err = read_scalar(&p, 8).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
