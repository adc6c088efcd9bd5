//! Versioned basis container.
//!
//! Layout, little-endian:
//!
//! ```text
//! offset  size        content
//! 0       8           magic "EPBASIS\x01"
//! 8       8           header length H (u64)
//! 16      H           header, JSON (see [`BasisHeader`])
//! 16+H    8*n*k       modes, f64 row-major (row = unknown, column = mode)
//! end-32  32          sha256 over all preceding bytes
//! ```
//!
//! The header stores the domain spec, the hash of the grid the basis was
//! built on, frequencies, residuals and the tie-break metadata. Loading
//! rebuilds the grid from the spec and refuses containers whose checksum or
//! grid hash disagree. Fitted subspaces reuse the container with the
//! `fitted` tag set and empty frequency data.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domains::{build_grid, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::report::atomic_write;
use crate::spectra::{BasisSource, EigenBasis};

const MAGIC: &[u8; 8] = b"EPBASIS\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisHeader {
    pub format_version: u32,
    pub domain: DomainSpec,
    pub grid_hash: String,
    pub n_unknowns: usize,
    pub k: usize,
    pub index_origin: usize,
    pub source: BasisSource,
    pub full_spectrum: bool,
    pub fitted: bool,
    pub tie_break: String,
    pub freqs: Vec<f64>,
    pub residuals: Vec<f64>,
}

fn encode(header: &BasisHeader, modes: &Array2<f64>) -> Result<Vec<u8>> {
    let header_json = serde_json::to_vec(header)?;
    let mut out =
        Vec::with_capacity(16 + header_json.len() + 8 * modes.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for row in modes.rows() {
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn decode(data: &[u8]) -> Result<(BasisHeader, Array2<f64>)> {
    if data.len() < 48 || &data[..8] != MAGIC {
        return Err(Error::CorruptBasisFile("bad magic or truncated file".into()));
    }
    let (body, checksum) = data.split_at(data.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(Error::CorruptBasisFile("checksum mismatch".into()));
    }
    let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    if body.len() < 16 + header_len {
        return Err(Error::CorruptBasisFile("header overruns file".into()));
    }
    let header: BasisHeader = serde_json::from_slice(&body[16..16 + header_len])?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::CorruptBasisFile(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let payload = &body[16 + header_len..];
    let expect = header.n_unknowns * header.k * 8;
    if payload.len() != expect {
        return Err(Error::CorruptBasisFile(format!(
            "payload holds {} bytes, header promises {expect}",
            payload.len()
        )));
    }
    let mut modes = Array2::zeros((header.n_unknowns, header.k));
    for r in 0..header.n_unknowns {
        for c in 0..header.k {
            let at = (r * header.k + c) * 8;
            modes[[r, c]] = f64::from_le_bytes(payload[at..at + 8].try_into().unwrap());
        }
    }
    Ok((header, modes))
}

/// Persist an eigenbasis (atomic write).
pub fn save_basis(basis: &EigenBasis, path: &Path) -> Result<()> {
    let header = BasisHeader {
        format_version: FORMAT_VERSION,
        domain: basis.grid().spec().clone(),
        grid_hash: basis.grid().content_hash().to_string(),
        n_unknowns: basis.n_unknowns(),
        k: basis.k(),
        index_origin: basis.index_origin(),
        source: basis.source(),
        full_spectrum: basis.full_spectrum(),
        fitted: false,
        tie_break: basis.tie_break().to_string(),
        freqs: basis.freqs().to_vec(),
        residuals: basis.residuals().to_vec(),
    };
    let bytes = encode(&header, basis.modes())?;
    atomic_write(path, &bytes)
}

/// Persist a fitted subspace over a grid (atomic write).
pub fn save_fitted(grid: &Grid, columns: &Array2<f64>, path: &Path) -> Result<()> {
    let header = BasisHeader {
        format_version: FORMAT_VERSION,
        domain: grid.spec().clone(),
        grid_hash: grid.content_hash().to_string(),
        n_unknowns: columns.nrows(),
        k: columns.ncols(),
        index_origin: 0,
        source: BasisSource::Numeric,
        full_spectrum: false,
        fitted: true,
        tie_break: "fitted:singular-value-desc".into(),
        freqs: Vec::new(),
        residuals: Vec::new(),
    };
    let bytes = encode(&header, columns)?;
    atomic_write(path, &bytes)
}

fn load_raw(path: &Path) -> Result<(BasisHeader, Array2<f64>, Arc<Grid>)> {
    let data = std::fs::read(path)?;
    let (header, modes) = decode(&data)?;
    let grid = Arc::new(build_grid(&header.domain)?);
    if grid.content_hash() != header.grid_hash {
        return Err(Error::GridHashMismatch {
            expected: header.grid_hash.clone(),
            got: grid.content_hash().to_string(),
        });
    }
    Ok((header, modes, grid))
}

/// Load an eigenbasis container; fitted containers are rejected here.
pub fn load_basis(path: &Path) -> Result<EigenBasis> {
    let (header, modes, grid) = load_raw(path)?;
    if header.fitted {
        return Err(Error::CorruptBasisFile(
            "container holds a fitted subspace, not an eigenbasis".into(),
        ));
    }
    Ok(EigenBasis::from_parts(
        grid,
        header.freqs,
        modes,
        header.residuals,
        header.source,
        header.full_spectrum,
        header.index_origin,
        header.tie_break,
    ))
}

/// Load a fitted-subspace container.
pub fn load_fitted(path: &Path) -> Result<(Arc<Grid>, Array2<f64>)> {
    let (header, modes, grid) = load_raw(path)?;
    if !header.fitted {
        return Err(Error::CorruptBasisFile(
            "container holds an eigenbasis, not a fitted subspace".into(),
        ));
    }
    Ok((grid, modes))
}

/// Content hash of a container file, for embedding into reports.
pub fn file_hash(path: &Path) -> Result<String> {
    let data = std::fs::read(path)?;
    let digest = Sha256::digest(&data);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}
