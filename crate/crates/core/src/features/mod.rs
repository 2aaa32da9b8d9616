//! Frame-level feature sequences, dataset manifests and resampling.
//!
//! A video is represented by the matrix of its per-frame feature vectors
//! (`T` rows by `q` columns). Features are produced elsewhere; this crate
//! only ingests them from files or generates synthetic ones.

mod io;
mod synth;

pub use io::{load_feature_file, read_matrix, write_feature_files, write_matrix};
pub use synth::{gen_synthetic, SynthParams, SYNTHETIC_STREAM};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One video's per-frame feature matrix for a single stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub video_id: String,
    pub stream: String,
    /// `T` rows (time) by `q` columns (feature dimension).
    pub frames: Array2<f64>,
}

impl FrameSequence {
    pub fn new(video_id: impl Into<String>, stream: impl Into<String>, frames: Array2<f64>) -> Result<Self> {
        let seq = FrameSequence {
            video_id: video_id.into(),
            stream: stream.into(),
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.frames.nrows() == 0 || self.frames.ncols() == 0 {
            return Err(Error::Shape(format!(
                "frame matrix for '{}' must have at least one row and one column, got {}x{}",
                self.video_id,
                self.frames.nrows(),
                self.frames.ncols()
            )));
        }
        if let Some(((t, d), v)) = self.frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value {v} at frame {t}, dim {d} of '{}'",
                self.video_id
            )));
        }
        Ok(())
    }
}

/// Nearest-index uniform resampling to a fixed frame count.
///
/// Row `j` of the output is row `floor(j * T / t_target)` of the input,
/// so the result is deterministic and order-preserving and no values are
/// interpolated.
pub fn resample(seq: &FrameSequence, t_target: usize) -> Result<FrameSequence> {
    if t_target == 0 {
        return Err(Error::Parameter("resample target must be >= 1".into()));
    }
    let t = seq.num_frames();
    if t_target == t {
        return Ok(seq.clone());
    }
    let mut out = Array2::zeros((t_target, seq.dim()));
    for j in 0..t_target {
        let src = (j as u128 * t as u128 / t_target as u128) as usize;
        out.row_mut(j).assign(&seq.frames.row(src));
    }
    Ok(FrameSequence {
        video_id: seq.video_id.clone(),
        stream: seq.stream.clone(),
        frames: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line: a video id, its label, split assignment and the
/// per-stream feature file paths (relative to the manifest's directory).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "id")]
    pub video_id: String,
    pub label: u32,
    pub split: Split,
    pub streams: BTreeMap<String, String>,
}

/// A dataset manifest: the list of videos with labels and feature paths.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that stream paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Manifest {
            entries,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Number of classes, taken as the largest label present.
    pub fn num_classes(&self) -> u32 {
        self.entries.iter().map(|e| e.label).max().unwrap_or(0)
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Parse a JSON-lines manifest and verify ids, labels and that every
    /// referenced feature file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
                Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            entries.push(entry);
        }
        let manifest = Manifest {
            entries,
            base_dir: path.parent().unwrap_or_else(|| Path::new("")).to_path_buf(),
        };
        manifest.validate()?;
        for entry in &manifest.entries {
            for rel in entry.streams.values() {
                let p = manifest.base_dir.join(rel);
                if !p.is_file() {
                    return Err(Error::Manifest(format!(
                        "feature file '{}' referenced by video '{}' does not exist",
                        p.display(),
                        entry.video_id
                    )));
                }
            }
        }
        Ok(manifest)
    }

    /// Write the manifest as JSON-lines, one entry per line, in order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("manifest entries serialize"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Load the feature sequences of one stream, in manifest order.
    pub fn load_stream(&self, stream: &str) -> Result<Vec<FrameSequence>> {
        let mut seqs = Vec::with_capacity(self.entries.len());
        let mut dim = None;
        for entry in &self.entries {
            let rel = entry.streams.get(stream).ok_or_else(|| {
                Error::Manifest(format!(
                    "video '{}' has no stream named '{stream}'",
                    entry.video_id
                ))
            })?;
            let frames = read_matrix(self.base_dir.join(rel))?;
            match dim {
                None => dim = Some(frames.ncols()),
                Some(q) if q != frames.ncols() => {
                    return Err(Error::Shape(format!(
                        "stream '{stream}' mixes feature dims: expected {q}, '{}' has {}",
                        entry.video_id,
                        frames.ncols()
                    )));
                }
                _ => {}
            }
            seqs.push(FrameSequence {
                video_id: entry.video_id.clone(),
                stream: stream.to_string(),
                frames,
            });
        }
        Ok(seqs)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            validate_video_id(&entry.video_id)?;
            if !seen.insert(entry.video_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate video id '{}'",
                    entry.video_id
                )));
            }
            if entry.label == 0 {
                return Err(Error::Manifest(format!(
                    "video '{}' has label 0; labels are 1-based",
                    entry.video_id
                )));
            }
        }
        Ok(())
    }
}

/// Ids become file names, so they must be non-empty and free of path syntax.
fn validate_video_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Manifest(format!(
            "video id '{id}' is not a safe file name (use [A-Za-z0-9._-], no leading dot)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq(rows: Array2<f64>) -> FrameSequence {
        FrameSequence::new("v", "s", rows).unwrap()
    }

    #[test]
    fn resample_identity_when_target_equals_length() {
        let s = seq(array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]);
        let r = resample(&s, 6).unwrap();
        assert_eq!(r.frames, s.frames);
    }

    #[test]
    fn resample_downsamples_by_floor_index() {
        let s = seq(array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]]);
        let r = resample(&s, 3).unwrap();
        assert_eq!(r.frames, array![[0.0], [2.0], [4.0]]);
    }

    #[test]
    fn resample_upsamples_by_repetition() {
        let s = seq(array![[1.0, 10.0], [2.0, 20.0]]);
        let r = resample(&s, 4).unwrap();
        assert_eq!(
            r.frames,
            array![[1.0, 10.0], [1.0, 10.0], [2.0, 20.0], [2.0, 20.0]]
        );
    }

    #[test]
    fn resample_rejects_zero_target() {
        let s = seq(array![[1.0]]);
        assert!(matches!(resample(&s, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sequence_rejects_non_finite_values() {
        let err = FrameSequence::new("v", "s", array![[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let entry = |id: &str| ManifestEntry {
            video_id: id.to_string(),
            label: 1,
            split: Split::Train,
            streams: BTreeMap::new(),
        };
        let err = Manifest::new(vec![entry("a"), entry("a")]).unwrap_err();
        assert!(matches!(err, Error::Manifest(_)));
    }

    #[test]
    fn manifest_rejects_unsafe_ids() {
        let entry = ManifestEntry {
            video_id: "../evil".to_string(),
            label: 1,
            split: Split::Train,
            streams: BTreeMap::new(),
        };
        assert!(Manifest::new(vec![entry]).is_err());
    }

    #[test]
    fn manifest_rejects_zero_labels() {
        let entry = ManifestEntry {
            video_id: "a".to_string(),
            label: 0,
            split: Split::Train,
            streams: BTreeMap::new(),
        };
        assert!(Manifest::new(vec![entry]).is_err());
    }
}
