//! Binary feature-file format.
//!
//! Layout (little-endian, no padding):
//! magic `TPFV` | version `u32` = 1 | `T: u64` | `q: u64` | `T*q` `f32`
//! values in row-major (time-major) order.
//!
//! The same container is reused for pyramid representations, with the row
//! count holding the node count instead of a frame count.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FrameSequence, Manifest};

pub(crate) const MAGIC: [u8; 4] = *b"TPFV";
pub(crate) const VERSION: u32 = 1;

const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

/// Read a feature matrix. Values are widened from `f32` storage to `f64`
/// exactly.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let need = |end: u64, what: &str| -> Result<()> {
        if (bytes.len() as u64) < end {
            Err(Error::format(
                path,
                bytes.len() as u64,
                format!("truncated file: {what} needs bytes up to {end}, file has {}", bytes.len()),
            ))
        } else {
            Ok(())
        }
    };

    need(4, "magic")?;
    if bytes[0..4] != MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"TPFV\""));
    }
    need(8, "version")?;
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}")));
    }
    need(16, "row count")?;
    let t = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    need(24, "column count")?;
    let q = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if t == 0 {
        return Err(Error::format(path, 8, "row count must be >= 1"));
    }
    if q == 0 {
        return Err(Error::format(path, 16, "column count must be >= 1"));
    }
    let count = t.checked_mul(q).ok_or_else(|| {
        Error::format(path, 8, format!("dimensions {t}x{q} overflow"))
    })?;
    let payload_end = HEADER_LEN + count * 4;
    need(payload_end, "payload")?;
    if bytes.len() as u64 != payload_end {
        return Err(Error::format(
            path,
            payload_end,
            format!("{} trailing bytes after payload", bytes.len() as u64 - payload_end),
        ));
    }

    let mut values = Vec::with_capacity(count as usize);
    for i in 0..count {
        let off = (HEADER_LEN + i * 4) as usize;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(path, off as u64, format!("non-finite value {v}")));
        }
        values.push(v as f64);
    }
    Array2::from_shape_vec((t as usize, q as usize), values)
        .map_err(|e| Error::Shape(e.to_string()))
}

/// Write a feature matrix. Values are stored as `f32`.
pub fn write_matrix(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let (t, q) = matrix.dim();
    if t == 0 || q == 0 {
        return Err(Error::Shape(format!("cannot write empty matrix {t}x{q}")));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + t * q * 4);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(t as u64).to_le_bytes());
    bytes.extend_from_slice(&(q as u64).to_le_bytes());
    for v in matrix.iter() {
        if !v.is_finite() {
            return Err(Error::Parameter(format!("refusing to write non-finite value {v}")));
        }
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a standalone feature file. The video id is taken from the file stem;
/// the stream name is left empty (manifest loading fills both in).
pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let frames = read_matrix(path)?;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FrameSequence {
        video_id,
        stream: String::new(),
        frames,
    })
}

/// Write each sequence to the path its manifest entry declares for the
/// sequence's stream, creating directories as needed. Sequences must be
/// aligned with the manifest entries.
pub fn write_feature_files(dir: impl AsRef<Path>, manifest: &Manifest, seqs: &[FrameSequence]) -> Result<()> {
    let dir = dir.as_ref();
    if manifest.entries.len() != seqs.len() {
        return Err(Error::Shape(format!(
            "{} manifest entries but {} sequences",
            manifest.entries.len(),
            seqs.len()
        )));
    }
    for (entry, seq) in manifest.entries.iter().zip(seqs) {
        if entry.video_id != seq.video_id {
            return Err(Error::Manifest(format!(
                "sequence order mismatch: entry '{}' vs sequence '{}'",
                entry.video_id, seq.video_id
            )));
        }
        let rel = entry.streams.get(&seq.stream).ok_or_else(|| {
            Error::Manifest(format!(
                "entry '{}' does not declare stream '{}'",
                entry.video_id, seq.stream
            ))
        })?;
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_matrix(path, &seq.frames)?;
    }
    Ok(())
}
