//! Bond percolation on the complete `d`-ary tree of height `h`.
//!
//! The tree is never materialised. A depth-first walk keeps one frame per
//! level (cluster id and children still to visit), draws each edge's fate on
//! entry and accumulates cluster sizes in a table indexed by cluster id.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Real;

/// Largest allowed `d^h`.
pub const SIZE_BUDGET: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularParams {
    d: u32,
    h: u32,
    c: Option<f64>,
    keep: f64,
}

impl RegularParams {
    /// Keep-probability `q = 1 - c / h`.
    pub fn new(d: u32, h: u32, c: f64) -> Result<Self> {
        if h < 1 {
            return Err(invalid("height h must be at least 1"));
        }
        if !(c >= 0.0 && c < h as f64) {
            return Err(invalid(format!("need 0 <= c < h = {h}, got {c}")));
        }
        let mut p = RegularParams::with_keep(d, h, 1.0 - c / h as f64)?;
        p.c = Some(c);
        Ok(p)
    }

    /// Explicit keep-probability `q`.
    pub fn with_keep(d: u32, h: u32, q: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid(format!("degree d must be at least 2, got {d}")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid(format!("keep probability must lie in [0, 1], got {q}")));
        }
        let size = (d as u128).checked_pow(h).unwrap_or(u128::MAX);
        if size > SIZE_BUDGET {
            return Err(Error::BudgetExceeded { size, budget: SIZE_BUDGET });
        }
        Ok(RegularParams { d, h, c: None, keep: q })
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn h(&self) -> u32 {
        self.h
    }
    pub fn c(&self) -> Option<f64> {
        self.c
    }
    pub fn keep_probability(&self) -> f64 {
        self.keep
    }

    /// `(d^(h+1) - 1) / (d - 1)`.
    pub fn vertex_count(&self) -> u64 {
        vertex_count(self.d, self.h)
    }

    pub fn edge_count(&self) -> u64 {
        self.vertex_count() - 1
    }

    /// `P(tau_1 > i)` for this tree.
    pub fn tau_survival_exact(&self, i: u32) -> Result<f64> {
        if !(1..=self.h).contains(&i) {
            return Err(Error::Domain(format!("need 1 <= i <= h = {}, got {i}", self.h)));
        }
        Ok(tau_survival(self.d, self.keep, i))
    }
}

pub fn vertex_count(d: u32, h: u32) -> u64 {
    let d = d as u64;
    (d.pow(h + 1) - 1) / (d - 1)
}

/// `P(tau_1 > i) = q^(d (d^i - 1) / (d - 1))`: no edge of height `<= i` removed.
pub fn tau_survival<T: Real>(d: u32, q: T, i: u32) -> T {
    let edges = (d as u64) * ((d as u64).pow(i) - 1) / (d as u64 - 1);
    q.powf(T::of_u64(edges))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularClusterReport {
    /// Size of the root cluster.
    pub g0: u64,
    /// Other cluster sizes, non-increasing.
    pub ranked: Vec<u64>,
    /// Heights of removed edges, non-decreasing.
    pub tau: Vec<u32>,
}

impl RegularClusterReport {
    pub fn total_vertices(&self) -> u64 {
        self.g0 + self.ranked.iter().sum::<u64>()
    }

    /// Largest non-root cluster, 0 when there is none.
    pub fn g1(&self) -> u64 {
        self.ranked.first().copied().unwrap_or(0)
    }

    pub fn tau1(&self) -> Option<u32> {
        self.tau.first().copied()
    }
}

/// Walks the tree in preorder, asking `removed()` once per edge (in preorder
/// of the lower endpoint) whether that edge is gone.
pub fn clusters_from_edges(d: u32, h: u32, mut removed: impl FnMut() -> bool) -> RegularClusterReport {
    let mut sizes: Vec<u64> = vec![1];
    let mut per_height = vec![0u64; h as usize + 1];
    // (cluster id, children left to visit); stack depth = depth of the frame's vertex + 1
    let mut stack: Vec<(u32, u32)> = Vec::with_capacity(h as usize + 1);
    if h > 0 {
        stack.push((0, d));
    }
    while let Some(top) = stack.last_mut() {
        if top.1 == 0 {
            stack.pop();
            continue;
        }
        top.1 -= 1;
        let parent_cluster = top.0;
        let depth = stack.len() as u32;
        let id = if removed() {
            per_height[depth as usize] += 1;
            sizes.push(0);
            (sizes.len() - 1) as u32
        } else {
            parent_cluster
        };
        sizes[id as usize] += 1;
        if depth < h {
            stack.push((id, d));
        }
    }
    let g0 = sizes.swap_remove(0);
    let mut ranked = sizes;
    ranked.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = per_height.iter().sum();
    let mut tau = Vec::with_capacity(total as usize);
    for (height, &count) in per_height.iter().enumerate() {
        tau.extend(std::iter::repeat_n(height as u32, count as usize));
    }
    RegularClusterReport { g0, ranked, tau }
}

/// Independent Bernoulli removals drawn by geometric gaps between removed
/// edges, so the stream is consulted once per removal rather than per edge.
pub(crate) struct RemovalGaps<'a> {
    rng: &'a mut RandomStream,
    ln_keep: f64,
    mode: GapMode,
    until_next: u64,
}

#[derive(Clone, Copy)]
enum GapMode {
    Never,
    Always,
    Random,
}

impl<'a> RemovalGaps<'a> {
    pub(crate) fn new(keep: f64, rng: &'a mut RandomStream) -> Self {
        let mode = if keep >= 1.0 {
            GapMode::Never
        } else if keep <= 0.0 {
            GapMode::Always
        } else {
            GapMode::Random
        };
        let mut gaps = RemovalGaps { rng, ln_keep: keep.ln(), mode, until_next: 0 };
        gaps.until_next = gaps.draw_gap();
        gaps
    }

    fn draw_gap(&mut self) -> u64 {
        match self.mode {
            GapMode::Never => u64::MAX,
            GapMode::Always => 0,
            GapMode::Random => {
                // P(gap >= k) = keep^k
                let u: f64 = rand::Rng::random(self.rng);
                let g = ((1.0 - u).ln() / self.ln_keep).floor();
                if g >= u64::MAX as f64 { u64::MAX } else { g as u64 }
            }
        }
    }

    /// Whether the next edge is removed.
    #[inline]
    pub(crate) fn next_removed(&mut self) -> bool {
        if self.until_next > 0 {
            if self.until_next != u64::MAX {
                self.until_next -= 1;
            }
            false
        } else {
            self.until_next = self.draw_gap();
            true
        }
    }
}

/// Percolates the complete `d`-ary tree.
pub fn percolate_regular(params: &RegularParams, rng: &mut RandomStream) -> RegularClusterReport {
    let mut gaps = RemovalGaps::new(params.keep, rng);
    clusters_from_edges(params.d, params.h, || gaps.next_removed())
}

/// JSON-lines record for one regular-tree replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularRecord {
    pub seed: u64,
    pub d: u32,
    pub h: u32,
    pub c: Option<f64>,
    #[serde(rename = "G0")]
    pub g0: u64,
    #[serde(rename = "G")]
    pub top: Vec<u64>,
    pub tau: Vec<u32>,
}

impl RegularRecord {
    pub fn new(report: &RegularClusterReport, params: &RegularParams, seed: u64, top_k: usize) -> Self {
        RegularRecord {
            seed,
            d: params.d,
            h: params.h,
            c: params.c,
            g0: report.g0,
            top: report.ranked.iter().take(top_k).copied().collect(),
            tau: report.tau.iter().take(top_k).copied().collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
