//! Synthetic datasets with a planted temporal granularity.
//!
//! Every class gets a prototype built from constant values over the
//! `2^(signal_level-1)` contiguous segments of the frame range. Segment
//! values are chosen so that adjacent segment pairs cancel in their
//! frame-count-weighted mean, which makes all class prototypes identical
//! at every level coarser than `signal_level`: a classifier pooling above
//! the planted level sees no class signal at all.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{FrameSequence, Manifest, ManifestEntry, Split};
use crate::pyramid::{node_frames, NodeId};

/// Stream name used for generated datasets.
pub const SYNTHETIC_STREAM: &str = "synthetic";

/// Offset shared by all prototypes; keeps coarse-level Gram matrices away
/// from zero trace.
const BASE: f64 = 1.0;
const AMPLITUDE: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_per_class: usize,
    pub classes: u32,
    pub frames: usize,
    pub dim: usize,
    /// Pyramid level at which class prototypes differ; all coarser levels
    /// see identical means.
    pub signal_level: u32,
    pub noise_std: f64,
    pub seed: u64,
}

/// Generate a labeled synthetic dataset: prototypes plus i.i.d. Gaussian
/// noise, deterministic given the seed. Videos are assigned 70/30 to the
/// train/test split round-robin (positions 2, 5 and 8 of every block of
/// ten go to the test split).
pub fn gen_synthetic(params: &SynthParams) -> Result<(Manifest, Vec<FrameSequence>)> {
    validate(params)?;
    let t = params.frames;
    let q = params.dim;
    let segments = segment_ranges(t, params.signal_level)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = if params.noise_std > 0.0 {
        Some(Normal::new(0.0, params.noise_std).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };

    let mut entries = Vec::new();
    let mut seqs = Vec::new();
    for class in 1..=params.classes {
        let prototype = class_prototype(class, t, q, &segments, params.signal_level);
        for i in 0..params.n_per_class {
            let mut frames = prototype.clone();
            if let Some(normal) = &noise {
                frames.mapv_inplace(|v| v + normal.sample(&mut rng));
            }
            let video_id = format!("c{class:02}-{i:04}");
            let split = if matches!(i % 10, 2 | 5 | 8) {
                Split::Test
            } else {
                Split::Train
            };
            let mut streams = BTreeMap::new();
            streams.insert(
                SYNTHETIC_STREAM.to_string(),
                format!("features/{video_id}.tpf"),
            );
            entries.push(ManifestEntry {
                video_id: video_id.clone(),
                label: class,
                split,
                streams,
            });
            seqs.push(FrameSequence {
                video_id,
                stream: SYNTHETIC_STREAM.to_string(),
                frames,
            });
        }
    }
    Ok((Manifest::new(entries)?, seqs))
}

fn validate(params: &SynthParams) -> Result<()> {
    if params.classes < 2 {
        return Err(Error::Parameter("need at least 2 classes".into()));
    }
    if params.n_per_class == 0 {
        return Err(Error::Parameter("n_per_class must be >= 1".into()));
    }
    if params.dim == 0 {
        return Err(Error::Parameter("feature dim must be >= 1".into()));
    }
    if params.signal_level == 0 {
        return Err(Error::Parameter("signal_level must be >= 1".into()));
    }
    if !params.noise_std.is_finite() || params.noise_std < 0.0 {
        return Err(Error::Parameter(format!(
            "noise_std must be finite and >= 0, got {}",
            params.noise_std
        )));
    }
    let segs = 1usize
        .checked_shl(params.signal_level - 1)
        .filter(|s| *s <= params.frames)
        .ok_or_else(|| {
            Error::Parameter(format!(
                "signal_level {} needs at least 2^{} frames, got {}",
                params.signal_level,
                params.signal_level - 1,
                params.frames
            ))
        })?;
    if params.signal_level > 1 {
        // Each class's sign pattern is the binary expansion of (class - 1)
        // over (pairs x dims) slots; there must be enough slots to keep the
        // patterns distinct.
        let slots = (segs / 2).saturating_mul(params.dim).min(64) as u32;
        let needed = 32 - (params.classes - 1).leading_zeros();
        if slots < needed {
            return Err(Error::Parameter(format!(
                "{} classes need {needed} sign slots at signal_level {}, only {slots} available (raise dim or signal_level)",
                params.classes, params.signal_level
            )));
        }
    }
    Ok(())
}

fn segment_ranges(t: usize, signal_level: u32) -> Result<Vec<std::ops::Range<usize>>> {
    let count = 1usize << (signal_level - 1);
    (1..=count)
        .map(|k| node_frames(t, NodeId::new(signal_level, k as u32)?))
        .collect()
}

/// Noise-free prototype for one class.
///
/// At `signal_level == 1` classes simply differ in their global mean. At
/// deeper levels, each adjacent segment pair `(2p, 2p+1)` carries a sign
/// `sigma`, and the two segments get values `+2a*n2/(n1+n2)` and
/// `-2a*n1/(n1+n2)` so that the pair's weighted mean is exactly zero no
/// matter how unevenly the floor-based split divides the frames.
fn class_prototype(
    class: u32,
    t: usize,
    q: usize,
    segments: &[std::ops::Range<usize>],
    signal_level: u32,
) -> Array2<f64> {
    let mut proto = Array2::from_elem((t, q), BASE);
    if signal_level == 1 {
        let offset = AMPLITUDE * f64::from(class - 1);
        for row in 0..t {
            proto[(row, 0)] += offset;
        }
        return proto;
    }
    let pairs = segments.len() / 2;
    for p in 0..pairs {
        let left = &segments[2 * p];
        let right = &segments[2 * p + 1];
        let n1 = left.len() as f64;
        let n2 = right.len() as f64;
        for d in 0..q {
            let slot = d * pairs + p;
            let bit = if slot < 64 {
                (u64::from(class - 1) >> slot) & 1
            } else {
                0
            };
            let sigma = if bit == 1 { -1.0 } else { 1.0 };
            let left_val = sigma * 2.0 * AMPLITUDE * n2 / (n1 + n2);
            let right_val = -sigma * 2.0 * AMPLITUDE * n1 / (n1 + n2);
            for row in left.clone() {
                proto[(row, d)] += left_val;
            }
            for row in right.clone() {
                proto[(row, d)] += right_val;
            }
        }
    }
    proto
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::aggregate;

    fn params(signal_level: u32, noise_std: f64) -> SynthParams {
        SynthParams {
            n_per_class: 10,
            classes: 3,
            frames: 12,
            dim: 2,
            signal_level,
            noise_std,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (m1, s1) = gen_synthetic(&params(2, 0.5)).unwrap();
        let (m2, s2) = gen_synthetic(&params(2, 0.5)).unwrap();
        assert_eq!(m1.entries.len(), m2.entries.len());
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(a.video_id, b.video_id);
            assert_eq!(a.frames, b.frames);
        }
    }

    #[test]
    fn split_is_70_30_per_class() {
        let (manifest, _) = gen_synthetic(&params(1, 0.0)).unwrap();
        for class in 1..=3 {
            let train = manifest
                .entries
                .iter()
                .filter(|e| e.label == class && e.split == Split::Train)
                .count();
            let test = manifest
                .entries
                .iter()
                .filter(|e| e.label == class && e.split == Split::Test)
                .count();
            assert_eq!((train, test), (7, 3));
        }
    }

    #[test]
    fn level_one_signal_differs_in_global_mean() {
        let (_, seqs) = gen_synthetic(&params(1, 0.0)).unwrap();
        let mean0 = seqs[0].frames.column(0).mean().unwrap();
        let mean_last = seqs.last().unwrap().frames.column(0).mean().unwrap();
        assert!((mean0 - mean_last).abs() > 0.5);
    }

    #[test]
    fn coarser_levels_see_no_class_signal() {
        let mut p = params(3, 0.0);
        p.frames = 13; // deliberately not divisible by 4
        let (manifest, seqs) = gen_synthetic(&p).unwrap();
        // One representative video per class (noise-free, so all are equal).
        let mut reps = Vec::new();
        for class in 1..=p.classes {
            let idx = manifest
                .entries
                .iter()
                .position(|e| e.label == class)
                .unwrap();
            reps.push(aggregate(&seqs[idx], 3).unwrap());
        }
        for node in crate::pyramid::nodes_up_to(2).unwrap() {
            for d in 0..p.dim {
                let values: Vec<f64> = reps.iter().map(|r| r.node(node).unwrap()[d]).collect();
                let spread = values.iter().cloned().fold(f64::MIN, f64::max)
                    - values.iter().cloned().fold(f64::MAX, f64::min);
                assert!(spread.abs() <= 1e-12, "node {node:?} dim {d} spread {spread}");
            }
        }
        // At the planted level the prototypes must actually differ.
        let mut max_gap = 0.0f64;
        for k in 1..=4u32 {
            let node = NodeId::new(3, k).unwrap();
            for d in 0..p.dim {
                let a = reps[0].node(node).unwrap()[d];
                let b = reps[1].node(node).unwrap()[d];
                max_gap = max_gap.max((a - b).abs());
            }
        }
        assert!(max_gap > 0.1, "planted level carries no signal");
    }

    #[test]
    fn rejects_too_few_frames_for_level() {
        let mut p = params(4, 0.0);
        p.frames = 7; // needs 8
        assert!(matches!(gen_synthetic(&p), Err(Error::Parameter(_))));
    }

    #[test]
    fn rejects_more_classes_than_encodable() {
        let mut p = params(2, 0.0);
        p.dim = 1; // one pair x one dim = 2 patterns
        p.classes = 3;
        assert!(matches!(gen_synthetic(&p), Err(Error::Parameter(_))));
    }
}
