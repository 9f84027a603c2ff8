//! Exact percolation laws on tiny trees by enumerating every edge mask.
//!
//! The enumeration reuses the production cluster routines, so a mismatch with
//! Monte Carlo frequencies points at the sampling path. Probabilities are
//! generic over [`Weight`]: `f64` multiplies per-edge factors in log space,
//! `BigRational` is exact.

use std::collections::BTreeMap;
use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::percolation::{clusters_with_counts, ClusterReport, EdgeMask};
use crate::regular_tree::{clusters_from_edges, RegularClusterReport};
use crate::split_tree::SplitTree;

/// Largest number of edges accepted for enumeration.
pub const MAX_EDGES: usize = 20;

const CHUNKS: u64 = 64;

pub trait Weight: Clone + Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    /// Probability of one mask with `kept` surviving and `removed` removed edges.
    fn mask(keep: f64, kept: u32, removed: u32) -> Self;
    fn accumulate(&mut self, other: &Self);
    fn as_f64(&self) -> f64;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    fn mask(keep: f64, kept: u32, removed: u32) -> Self {
        let mut log = 0.0;
        if kept > 0 {
            log += kept as f64 * keep.ln();
        }
        if removed > 0 {
            log += removed as f64 * (1.0 - keep).ln();
        }
        log.exp()
    }

    fn accumulate(&mut self, other: &Self) {
        *self += other;
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Weight for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    /// Uses the exact binary value of `keep`.
    fn mask(keep: f64, kept: u32, removed: u32) -> Self {
        let p = BigRational::from_float(keep).expect("finite keep probability");
        let one: BigRational = One::one();
        let r = &one - &p;
        num_traits::pow(p, kept as usize) * num_traits::pow(r, removed as usize)
    }

    fn accumulate(&mut self, other: &Self) {
        *self += other;
    }

    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Finite law on outcome keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution<K: Ord, W> {
    probs: BTreeMap<K, W>,
}

impl<K: Ord + Clone, W: Weight> ExactDistribution<K, W> {
    fn empty() -> Self {
        ExactDistribution { probs: BTreeMap::new() }
    }

    fn add(&mut self, key: K, w: &W) {
        self.probs.entry(key).or_insert_with(W::zero).accumulate(w);
    }

    fn merge(&mut self, other: Self) {
        for (k, w) in other.probs {
            self.add(k, &w);
        }
    }

    fn map_keys<J: Ord + Clone>(&self, f: impl Fn(&K) -> J) -> ExactDistribution<J, W> {
        let mut out = ExactDistribution::empty();
        for (k, w) in &self.probs {
            out.add(f(k), w);
        }
        out
    }

    pub fn probability(&self, key: &K) -> Option<&W> {
        self.probs.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &W)> {
        self.probs.iter()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> W {
        let mut t = W::zero();
        for w in self.probs.values() {
            t.accumulate(w);
        }
        t
    }

    pub fn to_f64(&self) -> ExactDistribution<K, f64> {
        ExactDistribution { probs: self.probs.iter().map(|(k, w)| (k.clone(), w.as_f64())).collect() }
    }
}

/// Order in which masks are visited; the laws must not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskOrder {
    #[default]
    Forward,
    Reverse,
}

/// Which cluster size a ranked key uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterMeasure {
    #[default]
    Balls,
    Vertices,
}

fn check_edges(edges: usize) -> Result<()> {
    if edges > MAX_EDGES {
        return Err(Error::TooLarge { edges, max: MAX_EDGES });
    }
    Ok(())
}

fn check_keep(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("keep probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Enumerates all `2^edges` masks in fixed chunks and merges the chunk laws in
/// chunk order, so the result does not depend on the thread count.
fn enumerate<K, W>(edges: usize, keep: f64, order: MaskOrder, key: impl Fn(u64) -> K + Sync) -> ExactDistribution<K, W>
where
    K: Ord + Clone + Send,
    W: Weight,
{
    let total = 1u64 << edges;
    let chunk = total.div_ceil(CHUNKS).max(1);
    let mut bounds: Vec<(u64, u64)> = (0..total.div_ceil(chunk)).map(|i| (i * chunk, ((i + 1) * chunk).min(total))).collect();
    if order == MaskOrder::Reverse {
        bounds.reverse();
    }
    let weights: Vec<W> = (0..=edges as u32).map(|removed| W::mask(keep, edges as u32 - removed, removed)).collect();
    let parts: Vec<ExactDistribution<K, W>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut part = ExactDistribution::empty();
            let mut visit = |bits: u64| {
                let w = &weights[bits.count_ones() as usize];
                if !w.is_zero() {
                    part.add(key(bits), w);
                }
            };
            match order {
                MaskOrder::Forward => (lo..hi).for_each(&mut visit),
                MaskOrder::Reverse => (lo..hi).rev().for_each(&mut visit),
            }
            part
        })
        .collect();
    let mut law = ExactDistribution::empty();
    for part in parts {
        law.merge(part);
    }
    law
}

fn split_reports(tree: &SplitTree) -> impl Fn(u64) -> ClusterReport + Sync + '_ {
    let counts = tree.subtree_ball_counts();
    move |bits| {
        let mask = EdgeMask::from_bits(bits, tree.vertex_count());
        clusters_with_counts(tree, &counts, &mask).expect("mask matches tree")
    }
}

/// Exact laws of the root cluster's ball count `C0` and vertex count `Ĉ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RootClusterLaw<W> {
    pub balls: ExactDistribution<u64, W>,
    pub vertices: ExactDistribution<u64, W>,
}

pub fn exact_root_cluster_law<W: Weight>(tree: &SplitTree, p: f64) -> Result<RootClusterLaw<W>> {
    exact_root_cluster_law_ordered(tree, p, MaskOrder::Forward)
}

pub fn exact_root_cluster_law_ordered<W: Weight>(tree: &SplitTree, p: f64, order: MaskOrder) -> Result<RootClusterLaw<W>> {
    check_edges(tree.edge_count())?;
    check_keep(p)?;
    let report = split_reports(tree);
    let joint: ExactDistribution<(u64, u64), W> =
        enumerate(tree.edge_count(), p, order, |bits| {
            let r = report(bits);
            (r.root_balls, r.root_vertices)
        });
    Ok(RootClusterLaw { balls: joint.map_keys(|k| k.0), vertices: joint.map_keys(|k| k.1) })
}

/// Key `(C0, C1, C2, ...)`: root cluster first, then the others non-increasing.
pub fn ranked_key(report: &ClusterReport, measure: ClusterMeasure) -> Vec<u64> {
    let (root, rest) = match measure {
        ClusterMeasure::Balls => (report.root_balls, &report.ranked_balls),
        ClusterMeasure::Vertices => (report.root_vertices, &report.ranked_vertices),
    };
    std::iter::once(root).chain(rest.iter().copied()).collect()
}

pub fn exact_ranked_law<W: Weight>(tree: &SplitTree, p: f64, measure: ClusterMeasure) -> Result<ExactDistribution<Vec<u64>, W>> {
    exact_ranked_law_ordered(tree, p, measure, MaskOrder::Forward)
}

pub fn exact_ranked_law_ordered<W: Weight>(
    tree: &SplitTree,
    p: f64,
    measure: ClusterMeasure,
    order: MaskOrder,
) -> Result<ExactDistribution<Vec<u64>, W>> {
    check_edges(tree.edge_count())?;
    check_keep(p)?;
    let report = split_reports(tree);
    Ok(enumerate(tree.edge_count(), p, order, |bits| ranked_key(&report(bits), measure)))
}

/// Exact laws on the complete `d`-ary tree of height `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularLaw<W> {
    /// Joint law of `(G0, G1)`, with `G1 = 0` when no edge is removed.
    pub joint: ExactDistribution<(u64, u64), W>,
    /// Law of `tau_1`; `None` when no edge is removed.
    pub tau1: ExactDistribution<Option<u32>, W>,
}

pub fn regular_edge_count(d: u32, h: u32) -> u128 {
    let (d, mut level, mut total) = (d as u128, 1u128, 0u128);
    for _ in 0..h {
        level = level.saturating_mul(d);
        total = total.saturating_add(level);
    }
    total
}

/// Preorder cluster report for the regular-tree mask `bits` (bit `e` is the
/// `e`-th edge in preorder of its lower endpoint).
pub fn regular_report(d: u32, h: u32, bits: u64) -> RegularClusterReport {
    let mut e = 0;
    clusters_from_edges(d, h, || {
        let r = bits >> e & 1 == 1;
        e += 1;
        r
    })
}

pub fn exact_regular_law<W: Weight>(d: u32, h: u32, q: f64) -> Result<RegularLaw<W>> {
    exact_regular_law_ordered(d, h, q, MaskOrder::Forward)
}

pub fn exact_regular_law_ordered<W: Weight>(d: u32, h: u32, q: f64, order: MaskOrder) -> Result<RegularLaw<W>> {
    if d < 2 {
        return Err(invalid(format!("d must be at least 2, got {d}")));
    }
    let edges = regular_edge_count(d, h);
    check_edges(edges.min(usize::MAX as u128) as usize)?;
    check_keep(q)?;
    let full: ExactDistribution<(u64, u64, Option<u32>), W> = enumerate(edges as usize, q, order, |bits| {
        let r = regular_report(d, h, bits);
        (r.g0, r.g1(), r.tau1())
    });
    Ok(RegularLaw { joint: full.map_keys(|k| (k.0, k.1)), tau1: full.map_keys(|k| k.2) })
}

/// One line of a fixture table.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRecord {
    pub bits: u64,
    pub key: String,
    pub probability: f64,
}

/// `C0;C1,C2,...`
pub fn format_ranked_key(key: &[u64]) -> String {
    let rest: Vec<String> = key[1..].iter().map(u64::to_string).collect();
    format!("{};{}", key[0], rest.join(","))
}

/// `G0;G1,G2,...|tau1`, with `-` for an absent `tau1`.
pub fn format_regular_key(report: &RegularClusterReport) -> String {
    let rest: Vec<String> = report.ranked.iter().map(u64::to_string).collect();
    let tau = report.tau1().map_or_else(|| "-".to_string(), |t| t.to_string());
    format!("{};{}|{}", report.g0, rest.join(","), tau)
}

fn mask_weight(keep: f64, edges: usize, bits: u64) -> f64 {
    let removed = bits.count_ones();
    f64::mask(keep, edges as u32 - removed, removed)
}

/// Per-mask table for a split tree, keyed by ranked ball counts.
pub fn split_mask_table(tree: &SplitTree, p: f64) -> Result<Vec<MaskRecord>> {
    check_edges(tree.edge_count())?;
    check_keep(p)?;
    let report = split_reports(tree);
    let edges = tree.edge_count();
    Ok((0..1u64 << edges)
        .map(|bits| MaskRecord {
            bits,
            key: format_ranked_key(&ranked_key(&report(bits), ClusterMeasure::Balls)),
            probability: mask_weight(p, edges, bits),
        })
        .collect())
}

/// Per-mask table for the complete `d`-ary tree.
pub fn regular_mask_table(d: u32, h: u32, q: f64) -> Result<Vec<MaskRecord>> {
    let edges = regular_edge_count(d, h);
    check_edges(edges.min(usize::MAX as u128) as usize)?;
    check_keep(q)?;
    let edges = edges as usize;
    Ok((0..1u64 << edges)
        .map(|bits| MaskRecord {
            bits,
            key: format_regular_key(&regular_report(d, h, bits)),
            probability: mask_weight(q, edges, bits),
        })
        .collect())
}

/// Text table: `# mask key probability` header, then one line per mask with
/// the bits written least significant edge first.
pub fn format_mask_table(records: &[MaskRecord], edges: usize) -> String {
    let mut out = String::from("# mask key probability\n");
    for r in records {
        let bits: String = (0..edges).map(|e| if r.bits >> e & 1 == 1 { '1' } else { '0' }).collect();
        out.push_str(&format!("{bits} {} {:.17e}\n", r.key, r.probability));
    }
    out
}

pub fn parse_mask_table(text: &str) -> Result<Vec<MaskRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| Error::Dump { line: i + 1, reason: reason.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [mask, key, prob] = fields[..] else {
            return Err(bad("expected three fields"));
        };
        let mut bits = 0u64;
        for (e, ch) in mask.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << e,
                '0' => {}
                _ => return Err(bad("mask must be a 0/1 string")),
            }
        }
        let probability = prob.parse().map_err(|_| bad("bad probability"))?;
        records.push(MaskRecord { bits, key: key.to_string(), probability });
    }
    Ok(records)
}

/// Sums a table into a law over its keys.
pub fn table_law(records: &[MaskRecord]) -> ExactDistribution<String, f64> {
    let mut law = ExactDistribution::empty();
    for r in records {
        law.add(r.key.clone(), &r.probability);
    }
    law
}

/// Comparison of one outcome's exact probability with a sampled frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeCheck<K> {
    pub key: K,
    pub exact: f64,
    pub frequency: f64,
    /// Binomial standard error `sqrt(p (1 - p) / samples)` at the exact `p`.
    pub std_error: f64,
}

impl<K> OutcomeCheck<K> {
    pub fn within(&self, sigmas: f64) -> bool {
        (self.frequency - self.exact).abs() <= sigmas * self.std_error
    }
}

/// Checks every outcome with exact probability at least `min_probability`.
/// Sampled keys outside the support are reported with `exact = 0`.
pub fn compare_with_samples<K: Ord + Clone + Display>(
    exact: &ExactDistribution<K, f64>,
    samples: &[K],
    min_probability: f64,
) -> Vec<OutcomeCheck<K>> {
    let n = samples.len() as f64;
    let mut freq: BTreeMap<&K, u64> = BTreeMap::new();
    for s in samples {
        *freq.entry(s).or_default() += 1;
    }
    let mut checks: Vec<OutcomeCheck<K>> = exact
        .iter()
        .filter(|(_, &p)| p >= min_probability)
        .map(|(k, &p)| OutcomeCheck {
            key: k.clone(),
            exact: p,
            frequency: freq.get(k).copied().unwrap_or(0) as f64 / n,
            std_error: (p * (1.0 - p) / n).sqrt(),
        })
        .collect();
    for (k, &count) in &freq {
        if exact.probability(k).is_none() {
            checks.push(OutcomeCheck { key: (*k).clone(), exact: 0.0, frequency: count as f64 / n, std_error: 0.0 });
        }
    }
    checks
}

/// Exact `num / den`.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
