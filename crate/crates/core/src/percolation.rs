//! Bernoulli bond percolation on split trees.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::regular_tree::RemovalGaps;
use crate::rng::RandomStream;
use crate::split_tree::{size_threshold, SplitTree, SubtreeCounts};

/// How the keep-probability `p` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum PercolationMode {
    /// `p = 1 - c / ln n`.
    SplitRegime { c: f64, n: u64 },
    /// `q = 1 - c / h`.
    RegularRegime { c: f64, h: u32 },
    Explicit { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercolationParams {
    mode: PercolationMode,
    keep: f64,
}

impl PercolationParams {
    pub fn split_regime(c: f64, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("split regime needs n >= 2, got {n}")));
        }
        let ln_n = (n as f64).ln();
        if !(c >= 0.0 && c < ln_n) {
            return Err(invalid(format!("split regime needs 0 <= c < ln n = {ln_n}, got {c}")));
        }
        Ok(PercolationParams { mode: PercolationMode::SplitRegime { c, n }, keep: 1.0 - c / ln_n })
    }

    pub fn regular_regime(c: f64, h: u32) -> Result<Self> {
        if h < 1 {
            return Err(invalid("regular regime needs h >= 1"));
        }
        if !(c >= 0.0 && c < h as f64) {
            return Err(invalid(format!("regular regime needs 0 <= c < h = {h}, got {c}")));
        }
        Ok(PercolationParams { mode: PercolationMode::RegularRegime { c, h }, keep: 1.0 - c / h as f64 })
    }

    pub fn explicit(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("keep probability must lie in [0, 1], got {p}")));
        }
        Ok(PercolationParams { mode: PercolationMode::Explicit { p }, keep: p })
    }

    pub fn mode(&self) -> PercolationMode {
        self.mode
    }

    /// Probability that an edge survives.
    pub fn keep_probability(&self) -> f64 {
        self.keep
    }
}

/// Removed flag of the edge above each vertex; the root entry is always `false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    removed: Vec<bool>,
}

impl EdgeMask {
    /// Mask with no edges removed.
    pub fn intact(vertices: usize) -> Self {
        EdgeMask { removed: vec![false; vertices] }
    }

    /// Mask from per-vertex flags; entry 0 (the root) must be `false`.
    pub fn from_flags(removed: Vec<bool>) -> Result<Self> {
        if removed.first() == Some(&true) {
            return Err(invalid("the root has no parent edge to remove"));
        }
        Ok(EdgeMask { removed })
    }

    /// Mask whose bit `e` removes the edge above vertex `e + 1`.
    pub fn from_bits(bits: u64, vertices: usize) -> Self {
        let mut removed = vec![false; vertices];
        for (e, r) in removed.iter_mut().skip(1).enumerate() {
            *r = bits >> e & 1 == 1;
        }
        EdgeMask { removed }
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn is_removed(&self, v: usize) -> bool {
        self.removed[v]
    }

    pub fn removed_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn set_removed(&mut self, v: usize, removed: bool) {
        assert!(v != 0 || !removed, "the root has no parent edge");
        self.removed[v] = removed;
    }
}

/// Removes every edge independently with probability `1 - p`.
pub fn percolate(tree: &SplitTree, params: &PercolationParams, rng: &mut RandomStream) -> EdgeMask {
    let mut removed = vec![false; tree.vertex_count()];
    let mut gaps = RemovalGaps::new(params.keep, rng);
    for r in removed.iter_mut().skip(1) {
        *r = gaps.next_removed();
    }
    EdgeMask { removed }
}

/// A removed edge, identified by its lower endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedEdge {
    pub vertex: usize,
    pub depth: u32,
    /// Balls in the whole subtree below the edge (not just its cluster).
    pub subtree_balls: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub root_balls: u64,
    pub root_vertices: u64,
    /// Non-root cluster ball counts, non-increasing.
    pub ranked_balls: Vec<u64>,
    /// Non-root cluster vertex counts, non-increasing.
    pub ranked_vertices: Vec<u64>,
    /// Removed edges by depth, ties left to right.
    pub removed_edges: Vec<RemovedEdge>,
}

impl ClusterReport {
    pub fn total_balls(&self) -> u64 {
        self.root_balls + self.ranked_balls.iter().sum::<u64>()
    }

    pub fn total_vertices(&self) -> u64 {
        self.root_vertices + self.ranked_vertices.iter().sum::<u64>()
    }

    /// `n_{i,n}` for the removed edges in order.
    pub fn early_subtree_balls(&self) -> impl Iterator<Item = u64> + '_ {
        self.removed_edges.iter().map(|e| e.subtree_balls)
    }
}

/// Splits the tree into clusters under `mask`.
pub fn clusters(tree: &SplitTree, mask: &EdgeMask) -> Result<ClusterReport> {
    clusters_with_counts(tree, &tree.subtree_ball_counts(), mask)
}

/// As [`clusters`], reusing precomputed subtree counts.
pub fn clusters_with_counts(tree: &SplitTree, counts: &SubtreeCounts, mask: &EdgeMask) -> Result<ClusterReport> {
    let len = tree.vertex_count();
    if mask.len() != len || counts.len() != len {
        return Err(Error::ShapeMismatch { mask: mask.len(), vertices: len });
    }
    // Parents precede children in the arena, so a forward sweep visits each
    // cluster top-down; a new cluster starts at every removed edge.
    let mut cluster_of = vec![0u32; len];
    let mut balls: Vec<u64> = vec![tree.vertex(0).ball_count() as u64];
    let mut verts: Vec<u64> = vec![1];
    let mut removed_edges = Vec::new();
    for v in 1..len {
        let vertex = tree.vertex(v);
        let id = if mask.removed[v] {
            removed_edges.push(RemovedEdge { vertex: v, depth: vertex.depth(), subtree_balls: counts.get(v) });
            balls.push(0);
            verts.push(0);
            balls.len() - 1
        } else {
            cluster_of[vertex.parent().expect("non-root vertex")] as usize
        };
        cluster_of[v] = id as u32;
        balls[id] += vertex.ball_count() as u64;
        verts[id] += 1;
    }
    let mut ranked_balls = balls[1..].to_vec();
    let mut ranked_vertices = verts[1..].to_vec();
    ranked_balls.sort_unstable_by(|a, b| b.cmp(a));
    ranked_vertices.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ClusterReport { root_balls: balls[0], root_vertices: verts[0], ranked_balls, ranked_vertices, removed_edges })
}

/// `N_n(t)` at each grid point: removed edges whose subtree holds at least
/// `n / (t ln n)` balls. `N_n(0) = 0`.
pub fn counting_process(report: &ClusterReport, n: u64, t_grid: &[f64]) -> Vec<u64> {
    let mut sizes: Vec<u64> = report.early_subtree_balls().collect();
    sizes.sort_unstable();
    t_grid
        .iter()
        .map(|&t| {
            let threshold = size_threshold(n, t);
            let below = sizes.partition_point(|&s| (s as f64) < threshold);
            (sizes.len() - below) as u64
        })
        .collect()
}

/// One JSON-lines record per percolated split tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub seed: u64,
    pub n: u64,
    pub c: f64,
    #[serde(rename = "C0")]
    pub c0: u64,
    #[serde(rename = "C0_hat")]
    pub c0_hat: u64,
    #[serde(rename = "C")]
    pub top_balls: Vec<u64>,
    #[serde(rename = "C_hat")]
    pub top_vertices: Vec<u64>,
    pub tau_depths: Vec<u32>,
    pub n_early: Vec<u64>,
}

impl ClusterRecord {
    pub fn new(report: &ClusterReport, seed: u64, n: u64, c: f64, top_k: usize) -> Self {
        let early = report.removed_edges.iter().take(top_k);
        ClusterRecord {
            seed,
            n,
            c,
            c0: report.root_balls,
            c0_hat: report.root_vertices,
            top_balls: report.ranked_balls.iter().take(top_k).copied().collect(),
            top_vertices: report.ranked_vertices.iter().take(top_k).copied().collect(),
            tau_depths: early.clone().map(|e| e.depth).collect(),
            n_early: early.map(|e| e.subtree_balls).collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
