//! Binary temporal pyramid over frame sequences.
//!
//! Level 1 is the root (global average pooling); level `l` splits the frame
//! range into `2^(l-1)` contiguous near-equal segments, and every node is
//! summarized by the arithmetic mean of its frames' feature vectors.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{resample, FrameSequence};

/// Address of one pyramid node: `level >= 1`, `1 <= index <= 2^(level-1)`.
/// Ordering is level-major, matching the on-disk node order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    pub index: u32,
}

impl NodeId {
    pub fn new(level: u32, index: u32) -> Result<Self> {
        if level == 0 || level > 32 {
            return Err(Error::Parameter(format!("node level {level} out of range 1..=32")));
        }
        let width = 1u64 << (level - 1);
        if index == 0 || u64::from(index) > width {
            return Err(Error::Parameter(format!(
                "node index {index} out of range 1..={width} at level {level}"
            )));
        }
        Ok(NodeId { level, index })
    }

    pub fn root() -> Self {
        NodeId { level: 1, index: 1 }
    }

    /// Children at the next level, in time order.
    pub fn children(self) -> (NodeId, NodeId) {
        (
            NodeId { level: self.level + 1, index: 2 * self.index - 1 },
            NodeId { level: self.level + 1, index: 2 * self.index },
        )
    }

    /// Position in (level, index) lexicographic order across a full pyramid.
    fn flat_position(self) -> usize {
        (1usize << (self.level - 1)) - 1 + (self.index as usize - 1)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.level, self.index)
    }
}

/// All nodes of a pyramid with `levels` levels, in (level, index) order.
/// A pyramid of `L` levels has `2^L - 1` nodes.
pub fn nodes_up_to(levels: u32) -> Result<Vec<NodeId>> {
    if levels == 0 || levels > 32 {
        return Err(Error::Parameter(format!("levels {levels} out of range 1..=32")));
    }
    let mut out = Vec::with_capacity((1usize << levels) - 1);
    for level in 1..=levels {
        for index in 1..=(1u32 << (level - 1)) {
            out.push(NodeId { level, index });
        }
    }
    Ok(out)
}

/// Frame-index range covered by a node over `t` frames:
/// `[floor((k-1)*t / 2^(l-1)), floor(k*t / 2^(l-1)))`.
///
/// Ranges at one level are disjoint, cover `[0, t)`, and nest inside their
/// parent's range. Every node is non-empty when `t >= 2^(l-1)`.
pub fn node_frames(t: usize, node: NodeId) -> Result<std::ops::Range<usize>> {
    let width = 1u64 << (node.level - 1);
    if (t as u64) < width {
        return Err(Error::Granularity(format!(
            "level {} needs at least {width} frames, got {t}",
            node.level
        )));
    }
    let k = u64::from(node.index);
    let start = ((k - 1) as u128 * t as u128 / width as u128) as usize;
    let end = (k as u128 * t as u128 / width as u128) as usize;
    Ok(start..end)
}

/// The node-averaged representations of one video: one vector per pyramid
/// node, rows stored in (level, index) order.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidRep {
    levels: u32,
    t_source: usize,
    /// `(2^levels - 1) x q`, row per node.
    vectors: Array2<f64>,
}

impl PyramidRep {
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn t_source(&self) -> usize {
        self.t_source
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn node_count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        nodes_up_to(self.levels).expect("levels validated at construction")
    }

    pub fn node(&self, node: NodeId) -> Result<ArrayView1<'_, f64>> {
        if node.level > self.levels {
            return Err(Error::Shape(format!(
                "node {node} not present in a {}-level pyramid",
                self.levels
            )));
        }
        Ok(self.vectors.row(node.flat_position()))
    }

    /// Node vectors as a matrix, rows in (level, index) order.
    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.vectors
    }
}

/// Build the pyramid representation: for every node, the arithmetic mean of
/// the frame rows in its range. Accumulation is in double precision.
pub fn aggregate(seq: &FrameSequence, levels: u32) -> Result<PyramidRep> {
    let nodes = nodes_up_to(levels)?;
    let t = seq.num_frames();
    let q = seq.dim();
    // Fail fast before any work if the deepest level would have empty nodes.
    node_frames(t, *nodes.last().expect("at least the root"))?;

    let mut vectors = Array2::zeros((nodes.len(), q));
    for (row, node) in nodes.iter().enumerate() {
        let range = node_frames(t, *node)?;
        let count = range.len() as f64;
        let mut acc = Array1::<f64>::zeros(q);
        for frame in range {
            acc += &seq.frames.row(frame);
        }
        acc /= count;
        vectors.row_mut(row).assign(&acc);
    }
    Ok(PyramidRep {
        levels,
        t_source: t,
        vectors,
    })
}

/// The frame-concatenation baseline: resample to `t_target` frames and
/// concatenate the rows in time order into one `t_target * q` vector.
pub fn spectrogram(seq: &FrameSequence, t_target: usize) -> Result<Array1<f64>> {
    let resampled = resample(seq, t_target)?;
    let (t, q) = resampled.frames.dim();
    Ok(Array1::from_iter(resampled.frames.iter().copied()).into_shape_with_order(t * q).expect("t*q elements"))
}
