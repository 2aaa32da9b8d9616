//! Per-node Gram matrices and their convex combination.
//!
//! Elementary kernels are plain dot products between two videos' node
//! vectors. Each elementary Gram matrix is trace-normalized by default so
//! that node kernels at different depths compete on information rather
//! than scale, and the combined kernel is `sum_node beta_node * G_node`
//! with `beta` on the probability simplex.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pyramid::{nodes_up_to, NodeId, PyramidRep};

const BANK_MAGIC: [u8; 4] = *b"TPGB";
const BANK_VERSION: u32 = 1;

/// Nonnegative per-node weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    beta: BTreeMap<NodeId, f64>,
}

impl SimplexWeights {
    const SUM_TOL: f64 = 1e-9;
    const NEG_TOL: f64 = 1e-12;

    /// Validate and wrap raw weights. Negatives within `-1e-12` are clamped
    /// to zero; anything further below is rejected.
    pub fn new(beta: BTreeMap<NodeId, f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Parameter("weight set must be non-empty".into()));
        }
        let mut clamped = BTreeMap::new();
        let mut sum = 0.0;
        for (node, w) in beta {
            if !w.is_finite() || w < -Self::NEG_TOL {
                return Err(Error::Parameter(format!(
                    "weight {w} for node {node} is not a valid simplex coordinate"
                )));
            }
            let w = w.max(0.0);
            sum += w;
            clamped.insert(node, w);
        }
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Parameter(format!(
                "weights sum to {sum}, expected 1 within {}",
                Self::SUM_TOL
            )));
        }
        Ok(SimplexWeights { beta: clamped })
    }

    pub fn uniform(nodes: &[NodeId]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Parameter("weight set must be non-empty".into()));
        }
        let w = 1.0 / nodes.len() as f64;
        Self::new(nodes.iter().map(|n| (*n, w)).collect())
    }

    /// All mass on a single node.
    pub fn indicator(nodes: &[NodeId], on: NodeId) -> Result<Self> {
        if !nodes.contains(&on) {
            return Err(Error::Parameter(format!("node {on} not in the bank")));
        }
        Self::new(
            nodes
                .iter()
                .map(|n| (*n, if *n == on { 1.0 } else { 0.0 }))
                .collect(),
        )
    }

    /// Uniform mass over one level's nodes, zero elsewhere.
    pub fn level_indicator(nodes: &[NodeId], level: u32) -> Result<Self> {
        let count = nodes.iter().filter(|n| n.level == level).count();
        if count == 0 {
            return Err(Error::Parameter(format!("no nodes at level {level}")));
        }
        let w = 1.0 / count as f64;
        Self::new(
            nodes
                .iter()
                .map(|n| (*n, if n.level == level { w } else { 0.0 }))
                .collect(),
        )
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.beta.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.beta.iter().map(|(n, w)| (*n, *w))
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Sum of weights per level, keyed by level.
    pub fn level_sums(&self) -> BTreeMap<u32, f64> {
        let mut sums = BTreeMap::new();
        for (node, w) in &self.beta {
            *sums.entry(node.level).or_insert(0.0) += w;
        }
        sums
    }

    pub fn max_abs_diff(&self, other: &SimplexWeights) -> f64 {
        let mut max = 0.0f64;
        for (node, w) in &self.beta {
            let o = other.get(*node).unwrap_or(0.0);
            max = max.max((w - o).abs());
        }
        for (node, w) in &other.beta {
            if !self.beta.contains_key(node) {
                max = max.max(w.abs());
            }
        }
        max
    }
}

/// Per-node Gram matrices over one ordered video set, plus the trace
/// normalizers that were applied.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub node_ids: Vec<NodeId>,
    /// One `n x n` symmetric matrix per node, same video order everywhere.
    pub grams: Vec<Array2<f64>>,
    /// Positive scale applied to each gram (1.0 when normalization is off).
    pub normalizers: Vec<f64>,
    pub video_ids: Vec<String>,
}

impl KernelBank {
    /// Compute the bank over all nodes of a `levels`-deep pyramid.
    pub fn build(
        reps: &[PyramidRep],
        video_ids: &[String],
        levels: u32,
        normalize: bool,
    ) -> Result<Self> {
        let nodes = nodes_up_to(levels)?;
        Self::build_for_nodes(reps, video_ids, &nodes, normalize)
    }

    pub fn build_for_nodes(
        reps: &[PyramidRep],
        video_ids: &[String],
        nodes: &[NodeId],
        normalize: bool,
    ) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::Parameter("empty video set".into()));
        }
        if reps.len() != video_ids.len() {
            return Err(Error::Shape(format!(
                "{} representations but {} video ids",
                reps.len(),
                video_ids.len()
            )));
        }
        let mut grams = Vec::with_capacity(nodes.len());
        let mut normalizers = Vec::with_capacity(nodes.len());
        for node in nodes {
            let raw = node_gram(reps, *node)?;
            if normalize {
                let (g, scale) = normalize_gram(&raw)?;
                grams.push(g);
                normalizers.push(scale);
            } else {
                grams.push(raw);
                normalizers.push(1.0);
            }
        }
        Ok(KernelBank {
            node_ids: nodes.to_vec(),
            grams,
            normalizers,
            video_ids: video_ids.to_vec(),
        })
    }

    pub fn n_videos(&self) -> usize {
        self.video_ids.len()
    }

    pub fn combine(&self, weights: &SimplexWeights) -> Result<Array2<f64>> {
        combine(self, weights)
    }
}

/// Gram matrix of one node's vectors: entry `(i, j)` is the dot product of
/// the node vectors of videos `i` and `j`. Symmetric by construction (the
/// upper triangle is computed and mirrored).
pub fn node_gram(reps: &[PyramidRep], node: NodeId) -> Result<Array2<f64>> {
    let n = reps.len();
    if n == 0 {
        return Err(Error::Parameter("empty video set".into()));
    }
    let q = reps[0].dim();
    for (i, rep) in reps.iter().enumerate() {
        if rep.dim() != q {
            return Err(Error::Shape(format!(
                "representation {i} has dim {}, expected {q}",
                rep.dim()
            )));
        }
    }
    let rows: Vec<_> = reps
        .iter()
        .map(|r| r.node(node))
        .collect::<Result<Vec<_>>>()?;
    let mut gram = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = rows[i].dot(&rows[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Scale a Gram matrix so its mean diagonal entry is one. Returns the
/// normalized matrix and the applied scale `n / trace(G)`.
pub fn normalize_gram(gram: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let n = gram.nrows();
    if n == 0 || gram.ncols() != n {
        return Err(Error::Shape(format!(
            "gram must be square and non-empty, got {}x{}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let trace: f64 = gram.diag().sum();
    if trace <= 0.0 {
        return Err(Error::DegenerateKernel(format!(
            "trace {trace} is not positive; all node vectors are zero"
        )));
    }
    let scale = n as f64 / trace;
    Ok((gram * scale, scale))
}

/// Convex combination `sum_node beta_node * G_node`. Exactly symmetric;
/// positive semi-definite whenever the inputs are.
pub fn combine(bank: &KernelBank, weights: &SimplexWeights) -> Result<Array2<f64>> {
    check_weight_cover(bank, weights)?;
    let n = bank.n_videos();
    let mut out = Array2::zeros((n, n));
    for (node, gram) in bank.node_ids.iter().zip(&bank.grams) {
        let w = weights.get(*node).expect("cover checked");
        if w == 0.0 {
            continue;
        }
        out.scaled_add(w, gram);
    }
    Ok(out)
}

fn check_weight_cover(bank: &KernelBank, weights: &SimplexWeights) -> Result<()> {
    if weights.len() != bank.node_ids.len()
        || bank.node_ids.iter().any(|n| weights.get(*n).is_none())
    {
        return Err(Error::Shape(format!(
            "weights cover {} nodes, bank has {}",
            weights.len(),
            bank.node_ids.len()
        )));
    }
    Ok(())
}

/// Kernel row of an unseen video against the training set:
/// entry `i` is `sum_node beta_node * scale_node * <psi_node(test), psi_node(train_i)>`,
/// with the training-time normalizers applied.
pub fn test_kernel_row(
    node_ids: &[NodeId],
    normalizers: &[f64],
    weights: &SimplexWeights,
    train_reps: &[PyramidRep],
    test_rep: &PyramidRep,
) -> Result<Vec<f64>> {
    if node_ids.len() != normalizers.len() {
        return Err(Error::Shape(format!(
            "{} nodes but {} normalizers",
            node_ids.len(),
            normalizers.len()
        )));
    }
    if weights.len() != node_ids.len() || node_ids.iter().any(|n| weights.get(*n).is_none()) {
        return Err(Error::Shape(
            "weights do not cover the node set".to_string(),
        ));
    }
    let mut row = vec![0.0; train_reps.len()];
    for (node, scale) in node_ids.iter().zip(normalizers) {
        let w = weights.get(*node).expect("cover checked") * scale;
        if w == 0.0 {
            continue;
        }
        let test_vec = test_rep.node(*node)?;
        for (i, rep) in train_reps.iter().enumerate() {
            let train_vec = rep.node(*node)?;
            if train_vec.len() != test_vec.len() {
                return Err(Error::Shape(format!(
                    "test dim {} vs train dim {} at node {node}",
                    test_vec.len(),
                    train_vec.len()
                )));
            }
            row[i] += w * test_vec.dot(&train_vec);
        }
    }
    Ok(row)
}

/// Serialize a bank: magic `TPGB`, version, node count, `n`, node ids,
/// normalizers, length-prefixed video ids, then the matrices row-major as
/// `f64` little-endian.
pub fn write_bank(path: impl AsRef<Path>, bank: &KernelBank) -> Result<()> {
    let path = path.as_ref();
    let n = bank.n_videos();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&BANK_MAGIC);
    bytes.extend_from_slice(&BANK_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(bank.node_ids.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for node in &bank.node_ids {
        bytes.extend_from_slice(&node.level.to_le_bytes());
        bytes.extend_from_slice(&node.index.to_le_bytes());
    }
    for s in &bank.normalizers {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    for id in &bank.video_ids {
        let raw = id.as_bytes();
        bytes.extend_from_slice(&(raw.len() as u32).to_le_bytes());
        bytes.extend_from_slice(raw);
    }
    for gram in &bank.grams {
        if gram.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "gram is {}x{}, expected {n}x{n}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        for v in gram.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bank(path: impl AsRef<Path>) -> Result<KernelBank> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take(4, "magic")?;
    if magic != BANK_MAGIC {
        return Err(Error::format(path, 0, "bad magic, expected \"TPGB\""));
    }
    let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
    if version != BANK_VERSION {
        return Err(Error::format(path, 4, format!("unsupported version {version}")));
    }
    let node_count = u64::from_le_bytes(cur.take(8, "node count")?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(cur.take(8, "video count")?.try_into().unwrap()) as usize;
    let mut node_ids = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let level = u32::from_le_bytes(cur.take(4, "node level")?.try_into().unwrap());
        let index = u32::from_le_bytes(cur.take(4, "node index")?.try_into().unwrap());
        node_ids.push(NodeId::new(level, index)?);
    }
    let mut normalizers = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        normalizers.push(f64::from_le_bytes(cur.take(8, "normalizer")?.try_into().unwrap()));
    }
    let mut video_ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u32::from_le_bytes(cur.take(4, "id length")?.try_into().unwrap()) as usize;
        let raw = cur.take(len, "video id")?;
        video_ids.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::format(path, cur.pos as u64 - len as u64, "invalid utf-8 id"))?,
        );
    }
    let mut grams = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let mut values = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            values.push(f64::from_le_bytes(cur.take(8, "gram value")?.try_into().unwrap()));
        }
        grams.push(Array2::from_shape_vec((n, n), values).expect("n*n values"));
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            path,
            cur.pos as u64,
            format!("{} trailing bytes", bytes.len() - cur.pos),
        ));
    }
    Ok(KernelBank {
        node_ids,
        grams,
        normalizers,
        video_ids,
    })
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or_else(|| {
            Error::format(self.path, self.pos as u64, "length overflow")
        })?;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated file while reading {what}"),
            ));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameSequence;
    use crate::pyramid::aggregate;
    use ndarray::array;

    fn rep_of(rows: Array2<f64>, levels: u32) -> PyramidRep {
        let seq = FrameSequence::new("v", "s", rows).unwrap();
        aggregate(&seq, levels).unwrap()
    }

    #[test]
    fn orthonormal_vectors_give_identity_gram() {
        let reps = vec![
            rep_of(array![[1.0, 0.0]], 1),
            rep_of(array![[0.0, 1.0]], 1),
        ];
        let g = node_gram(&reps, NodeId::root()).unwrap();
        assert_eq!(g, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn gram_matches_hand_computed_dot_products() {
        let reps = vec![
            rep_of(array![[1.0, 0.0]], 1),
            rep_of(array![[1.0, 1.0]], 1),
        ];
        let g = node_gram(&reps, NodeId::root()).unwrap();
        assert_eq!(g, array![[1.0, 1.0], [1.0, 2.0]]);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let reps: Vec<_> = (0..5)
            .map(|i| {
                rep_of(
                    Array2::from_shape_fn((4, 3), |(r, c)| ((i + r * c) as f64).sin() * 3.7),
                    2,
                )
            })
            .collect();
        let g = node_gram(&reps, NodeId::new(2, 2).unwrap()).unwrap();
        assert_eq!(g, g.t().to_owned());
    }

    #[test]
    fn normalize_identity_is_a_no_op() {
        let (g, scale) = normalize_gram(&Array2::eye(4)).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(g, Array2::eye(4));
    }

    #[test]
    fn normalize_scales_by_trace() {
        let (g, scale) = normalize_gram(&(Array2::eye(3) * 2.0)).unwrap();
        assert_eq!(scale, 0.5);
        assert_eq!(g, Array2::eye(3));

        let rank1 = array![[4.0, 4.0], [4.0, 4.0]];
        let (g, scale) = normalize_gram(&rank1).unwrap();
        assert_eq!(scale, 0.25);
        assert_eq!(g, array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn normalize_rejects_zero_trace() {
        let zero = Array2::zeros((3, 3));
        assert!(matches!(
            normalize_gram(&zero),
            Err(Error::DegenerateKernel(_))
        ));
    }

    #[test]
    fn indicator_combination_returns_that_gram() {
        let reps: Vec<_> = (0..4)
            .map(|i| rep_of(Array2::from_shape_fn((6, 2), |(r, c)| (i * 7 + r + c) as f64), 2))
            .collect();
        let ids: Vec<String> = (0..4).map(|i| format!("v{i}")).collect();
        let bank = KernelBank::build(&reps, &ids, 2, true).unwrap();
        for (k, node) in bank.node_ids.clone().into_iter().enumerate() {
            let w = SimplexWeights::indicator(&bank.node_ids, node).unwrap();
            assert_eq!(bank.combine(&w).unwrap(), bank.grams[k]);
        }
    }

    #[test]
    fn identical_grams_make_combination_weight_free() {
        let g = array![[2.0, 1.0], [1.0, 2.0]];
        let nodes = nodes_up_to(2).unwrap();
        let bank = KernelBank {
            node_ids: nodes.clone(),
            grams: vec![g.clone(); 3],
            normalizers: vec![1.0; 3],
            video_ids: vec!["a".into(), "b".into()],
        };
        let w = SimplexWeights::new(
            [(nodes[0], 0.6), (nodes[1], 0.1), (nodes[2], 0.3)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let combined = bank.combine(&w).unwrap();
        for (a, b) in combined.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_cover_mismatch_is_a_shape_error() {
        let bank = KernelBank {
            node_ids: nodes_up_to(2).unwrap(),
            grams: vec![Array2::eye(2); 3],
            normalizers: vec![1.0; 3],
            video_ids: vec!["a".into(), "b".into()],
        };
        let w = SimplexWeights::new([(NodeId::root(), 1.0)].into_iter().collect()).unwrap();
        assert!(matches!(bank.combine(&w), Err(Error::Shape(_))));
    }

    #[test]
    fn test_row_against_self_matches_gram_diagonal() {
        let reps: Vec<_> = (0..3)
            .map(|i| rep_of(Array2::from_shape_fn((4, 2), |(r, c)| (i + 2 * r + c) as f64), 1))
            .collect();
        let ids: Vec<String> = (0..3).map(|i| format!("v{i}")).collect();
        let bank = KernelBank::build(&reps, &ids, 1, true).unwrap();
        let w = SimplexWeights::indicator(&bank.node_ids, NodeId::root()).unwrap();
        let row = test_kernel_row(&bank.node_ids, &bank.normalizers, &w, &reps, &reps[1]).unwrap();
        assert!((row[1] - bank.grams[0][(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn zero_test_features_give_zero_row() {
        let reps: Vec<_> = (0..3)
            .map(|i| rep_of(Array2::from_shape_fn((4, 2), |(r, c)| (1 + i + r + c) as f64), 2))
            .collect();
        let zero_rep = rep_of(Array2::zeros((4, 2)), 2);
        let nodes = nodes_up_to(2).unwrap();
        let w = SimplexWeights::uniform(&nodes).unwrap();
        let row = test_kernel_row(&nodes, &[1.0; 3], &w, &reps, &zero_rep).unwrap();
        assert_eq!(row, vec![0.0; 3]);
    }

    #[test]
    fn simplex_weights_validate_sum_and_sign() {
        let nodes = nodes_up_to(1).unwrap();
        assert!(SimplexWeights::new([(nodes[0], 0.5)].into_iter().collect()).is_err());
        assert!(SimplexWeights::new([(nodes[0], -0.1)].into_iter().collect()).is_err());
        // A tiny negative from LP round-off is clamped.
        let nodes2 = nodes_up_to(2).unwrap();
        let w = SimplexWeights::new(
            [(nodes2[0], 1.0), (nodes2[1], -1e-13), (nodes2[2], 0.0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        assert_eq!(w.get(nodes2[1]), Some(0.0));
    }

    #[test]
    fn bank_file_round_trips() {
        let reps: Vec<_> = (0..4)
            .map(|i| rep_of(Array2::from_shape_fn((5, 3), |(r, c)| ((i + r) as f64) * 0.3 + c as f64), 2))
            .collect();
        let ids: Vec<String> = (0..4).map(|i| format!("vid-{i}")).collect();
        let bank = KernelBank::build(&reps, &ids, 2, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.tpgb");
        write_bank(&path, &bank).unwrap();
        let loaded = read_bank(&path).unwrap();
        assert_eq!(loaded.node_ids, bank.node_ids);
        assert_eq!(loaded.normalizers, bank.normalizers);
        assert_eq!(loaded.video_ids, bank.video_ids);
        for (a, b) in loaded.grams.iter().zip(&bank.grams) {
            assert_eq!(a, b);
        }
    }
}
