//! Random split trees.
//!
//! Balls are distributed over an infinite `b`-ary tree of buckets with
//! capacity `s`; each bucket carries its own split vector. When a leaf holding
//! `s` balls receives one more, `s0` balls stay, `s1` go to each child and the
//! rest are routed independently by the bucket's split vector, recursing into
//! any child that overflows. Ball-less subtrees are pruned.
//!
//! Trees are stored in an arena in breadth-first order: the root is vertex 0,
//! every parent precedes its children, siblings are contiguous and ordered by
//! child slot. Index order is therefore "by depth, then left to right".

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;
use crate::split_vector::SplitVectorSpec;

const NONE: u32 = u32::MAX;

/// Default vertex cap as a multiple of `n`.
pub const DEFAULT_VERTEX_CAP_FACTOR: usize = 64;

/// Parameters `b, s, s0, s1`, the split-vector law and the ball count `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTreeParams {
    b: usize,
    s: u32,
    s0: u32,
    s1: u32,
    vector: SplitVectorSpec,
    n: u64,
}

impl SplitTreeParams {
    pub fn new(b: usize, s: u32, s0: u32, s1: u32, vector: SplitVectorSpec, n: u64) -> Result<Self> {
        if vector.branch_factor() != b {
            return Err(invalid(format!(
                "split vector has {} components but b = {b}",
                vector.branch_factor()
            )));
        }
        if b > u16::MAX as usize {
            return Err(invalid(format!("branch factor {b} is too large")));
        }
        if s == 0 {
            return Err(invalid("capacity s must be positive"));
        }
        if s0 > s {
            return Err(invalid(format!("s0 = {s0} exceeds s = {s}")));
        }
        if b as u64 * s1 as u64 > (s + 1 - s0) as u64 {
            return Err(invalid(format!("b*s1 = {} exceeds s + 1 - s0 = {}", b as u64 * s1 as u64, s + 1 - s0)));
        }
        if n == 0 {
            return Err(invalid("ball count n must be at least 1"));
        }
        if n >= NONE as u64 {
            return Err(invalid(format!("ball count n = {n} is too large")));
        }
        Ok(SplitTreeParams { b, s, s0, s1, vector, n })
    }

    /// Binary search tree: `b = 2, s = s0 = 1, s1 = 0`, `V = (U, 1 - U)`.
    pub fn bst(n: u64) -> Result<Self> {
        SplitTreeParams::new(2, 1, 1, 0, SplitVectorSpec::uniform_binary(), n)
    }

    /// Same tree parameters with a different ball count.
    pub fn with_n(&self, n: u64) -> Result<Self> {
        SplitTreeParams::new(self.b, self.s, self.s0, self.s1, self.vector.clone(), n)
    }

    pub fn b(&self) -> usize {
        self.b
    }
    pub fn s(&self) -> u32 {
        self.s
    }
    pub fn s0(&self) -> u32 {
        self.s0
    }
    pub fn s1(&self) -> u32 {
        self.s1
    }
    pub fn vector(&self) -> &SplitVectorSpec {
        &self.vector
    }
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Balls routed by the split vector when a bucket holding `k > s` balls splits.
    fn routed(&self, k: u64) -> u64 {
        k - self.s0 as u64 - self.b as u64 * self.s1 as u64
    }
}

/// How balls are pushed into the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Insertion {
    /// One ball at a time from the root, splitting overflowing leaves.
    #[default]
    Sequential,
    /// Top down by subtree ball totals: a bucket reached by `m > s` balls keeps
    /// `s0` and hands each child `s1` plus a multinomial share of the rest.
    /// Given the split vectors each ball is routed independently, so this has
    /// the same law as `Sequential` while touching every vertex once.
    Recursive,
}

impl std::str::FromStr for Insertion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sequential" => Ok(Insertion::Sequential),
            "recursive" => Ok(Insertion::Recursive),
            other => Err(invalid(format!("unknown insertion method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerateOptions {
    pub method: Insertion,
    /// Keep every drawn split vector so [`SplitTree::path_product`] works.
    pub record_split_vectors: bool,
    /// Maximum vertex count; `None` means `64 n`.
    pub vertex_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    parent: u32,
    depth: u32,
    balls: u32,
    first_child: u32,
    child_count: u16,
    slot: u16,
}

impl Vertex {
    pub fn parent(&self) -> Option<usize> {
        (self.parent != NONE).then_some(self.parent as usize)
    }
    pub fn depth(&self) -> u32 {
        self.depth
    }
    pub fn ball_count(&self) -> u32 {
        self.balls
    }
    /// Position of this vertex among its parent's `b` child slots.
    pub fn slot(&self) -> usize {
        self.slot as usize
    }
    pub fn children(&self) -> Range<usize> {
        let start = self.first_child as usize;
        start..start + self.child_count as usize
    }
    pub fn is_leaf(&self) -> bool {
        self.child_count == 0
    }
}

/// A generated (or loaded) split tree.
#[derive(Debug, Clone)]
pub struct SplitTree {
    vertices: Vec<Vertex>,
    b: usize,
    n: u64,
    params: Option<SplitTreeParams>,
    // row-major, b per vertex; NaN rows were never drawn
    split_vectors: Option<Vec<f64>>,
}

impl PartialEq for SplitTree {
    fn eq(&self, other: &Self) -> bool {
        let same_vectors = match (&self.split_vectors, &other.split_vectors) {
            (None, None) => true,
            (Some(a), Some(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            _ => false,
        };
        same_vectors && self.vertices == other.vertices && self.b == other.b && self.n == other.n && self.params == other.params
    }
}

impl SplitTree {
    /// Generates a tree by sequential ball insertion.
    pub fn generate(params: &SplitTreeParams, rng: &mut RandomStream) -> Result<Self> {
        SplitTree::generate_with(params, &GenerateOptions::default(), rng)
    }

    pub fn generate_with(params: &SplitTreeParams, opts: &GenerateOptions, rng: &mut RandomStream) -> Result<Self> {
        let cap = opts
            .vertex_cap
            .unwrap_or_else(|| (params.n as usize).saturating_mul(DEFAULT_VERTEX_CAP_FACTOR))
            .min(NONE as usize - 1);
        let mut builder = Builder::new(params, cap);
        match opts.method {
            Insertion::Sequential => builder.insert_sequential(rng)?,
            Insertion::Recursive => builder.insert_recursive(rng)?,
        }
        Ok(builder.finish(opts.record_split_vectors))
    }

    /// Loads a tree from the line-oriented dump produced by [`SplitTree::dump`].
    ///
    /// Indices must be in breadth-first order (parents non-decreasing), which is
    /// what `dump` writes. Children are placed in slots `0, 1, ...` in index order.
    pub fn from_dump(text: &str, b: usize) -> Result<Self> {
        let mut vertices: Vec<Vertex> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| Error::Dump { line: lineno + 1, reason: reason.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err("expected `index parent depth ball_count`"));
            }
            let index: usize = fields[0].parse().map_err(|_| err("bad index"))?;
            if index != vertices.len() {
                return Err(err("indices must be consecutive from 0"));
            }
            let parent = match fields[1] {
                "-" => NONE,
                p => p.parse::<u32>().map_err(|_| err("bad parent"))?,
            };
            let depth: u32 = fields[2].parse().map_err(|_| err("bad depth"))?;
            let balls: u32 = fields[3].parse().map_err(|_| err("bad ball count"))?;
            if (index == 0) != (parent == NONE) {
                return Err(err("vertex 0 and only vertex 0 is the root"));
            }
            if parent != NONE {
                let p = parent as usize;
                if p >= index {
                    return Err(err("parent must precede child"));
                }
                let prev = vertices[index - 1].parent;
                if prev != NONE && prev as usize > p {
                    return Err(err("vertices are not in breadth-first order"));
                }
                let pv = &mut vertices[p];
                if pv.child_count == 0 {
                    pv.first_child = index as u32;
                } else if pv.first_child as usize + pv.child_count as usize != index {
                    return Err(err("siblings must be contiguous"));
                }
                pv.child_count += 1;
                if pv.child_count as usize > b {
                    return Err(err("more than b children"));
                }
                let slot = pv.child_count - 1;
                vertices.push(Vertex { parent, depth, balls, first_child: 0, child_count: 0, slot });
            } else {
                vertices.push(Vertex { parent, depth, balls, first_child: 0, child_count: 0, slot: 0 });
            }
        }
        if vertices.is_empty() {
            return Err(Error::Dump { line: 0, reason: "empty tree".into() });
        }
        let n = vertices.iter().map(|v| v.balls as u64).sum();
        let tree = SplitTree { vertices, b, n, params: None, split_vectors: None };
        tree.check_structure()?;
        Ok(tree)
    }

    /// One vertex per line: `index parent depth ball_count`, root parent `-`.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 16);
        out.push_str("# index parent depth ball_count\n");
        for (i, v) in self.vertices.iter().enumerate() {
            match v.parent() {
                Some(p) => writeln!(out, "{i} {p} {} {}", v.depth, v.balls),
                None => writeln!(out, "{i} - {} {}", v.depth, v.balls),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of vertices `N^(n)`.
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn n_balls(&self) -> u64 {
        self.n
    }

    pub fn branch_factor(&self) -> usize {
        self.b
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn params(&self) -> Option<&SplitTreeParams> {
        self.params.as_ref()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn height(&self) -> u32 {
        self.vertices.last().map_or(0, |v| v.depth)
    }

    /// Split vector drawn at `v`, if recorded and drawn.
    pub fn split_vector(&self, v: usize) -> Option<&[f64]> {
        let vecs = self.split_vectors.as_ref()?;
        let row = &vecs[v * self.b..(v + 1) * self.b];
        (!row[0].is_nan()).then_some(row)
    }

    /// Product of the split-vector entries chosen along the root-to-`v` path.
    pub fn path_product(&self, v: usize) -> Result<f64> {
        let vecs = self.split_vectors.as_ref().ok_or(Error::RecordingDisabled)?;
        let mut prod = 1.0;
        let mut cur = &self.vertices[v];
        while let Some(p) = cur.parent() {
            prod *= vecs[p * self.b + cur.slot()];
            cur = &self.vertices[p];
        }
        Ok(prod)
    }

    /// Checks the arena invariants that do not depend on the parameters.
    pub fn check_structure(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("malformed tree: {msg}")));
        let Some(root) = self.vertices.first() else {
            return bad("no vertices".into());
        };
        if root.parent != NONE || root.depth != 0 {
            return bad("vertex 0 is not a depth-0 root".into());
        }
        let mut balls = 0u64;
        for (i, v) in self.vertices.iter().enumerate() {
            balls += v.balls as u64;
            if v.child_count as usize > self.b {
                return bad(format!("vertex {i} has {} children", v.child_count));
            }
            if i > 0 && v.parent == NONE {
                return bad(format!("vertex {i} has no parent"));
            }
            for c in v.children() {
                let Some(child) = self.vertices.get(c) else {
                    return bad(format!("child {c} missing"));
                };
                if child.parent as usize != i || child.depth != v.depth + 1 {
                    return bad(format!("vertex {c} disagrees with its parent {i}"));
                }
            }
        }
        if balls != self.n {
            return bad(format!("ball counts sum to {balls}, not {}", self.n));
        }
        Ok(())
    }

    /// Checks the split-tree occupancy rules: internal vertices hold `s0`
    /// balls, leaves hold between 1 and `s`.
    pub fn check_ball_rules(&self, params: &SplitTreeParams) -> Result<()> {
        self.check_structure()?;
        if self.n != params.n {
            return Err(invalid(format!("tree holds {} balls, params say {}", self.n, params.n)));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            let ok = if v.is_leaf() {
                (1..=params.s).contains(&v.balls)
            } else {
                v.balls == params.s0
            };
            if !ok {
                return Err(invalid(format!(
                    "vertex {i} ({}) holds {} balls",
                    if v.is_leaf() { "leaf" } else { "internal" },
                    v.balls
                )));
            }
        }
        Ok(())
    }

    /// Balls stored in the subtree of every vertex.
    pub fn subtree_ball_counts(&self) -> SubtreeCounts {
        let mut counts: Vec<u64> = self.vertices.iter().map(|v| v.balls as u64).collect();
        for i in (1..self.vertices.len()).rev() {
            let p = self.vertices[i].parent as usize;
            counts[p] += counts[i];
        }
        SubtreeCounts(counts)
    }

    /// Same tree with every sibling group reversed (mirror image).
    pub fn mirrored(&self) -> SplitTree {
        let len = self.vertices.len();
        let mut order = Vec::with_capacity(len);
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.vertices[v].children().rev());
        }
        relabel(&self.vertices, &order, |old| {
            let v = &self.vertices[old];
            if v.parent().is_some() { (self.b - 1 - v.slot()) as u16 } else { 0 }
        })
        .map(|vertices| SplitTree { vertices, b: self.b, n: self.n, params: self.params.clone(), split_vectors: None })
        .expect("mirroring preserves structure")
    }
}

/// Rebuilds an arena in the given visiting order (a breadth-first order of the
/// old indices), recomputing child ranges.
fn relabel(old: &[Vertex], order: &[usize], slot_of: impl Fn(usize) -> u16) -> Option<Vec<Vertex>> {
    let mut new_index = vec![NONE; old.len()];
    for (new, &o) in order.iter().enumerate() {
        new_index[o] = new as u32;
    }
    let mut out: Vec<Vertex> = Vec::with_capacity(order.len());
    for (new, &o) in order.iter().enumerate() {
        let v = &old[o];
        let parent = v.parent().map_or(NONE, |p| new_index[p]);
        let depth = if parent == NONE { 0 } else { out[parent as usize].depth + 1 };
        if parent != NONE {
            let pv = &mut out[parent as usize];
            if pv.child_count == 0 {
                pv.first_child = new as u32;
            }
            pv.child_count += 1;
        }
        out.push(Vertex { parent, depth, balls: v.balls, first_child: 0, child_count: 0, slot: slot_of(o) });
    }
    Some(out)
}

struct Builder<'a> {
    params: &'a SplitTreeParams,
    cap: usize,
    balls: Vec<u32>,
    internal: Vec<bool>,
    parent: Vec<u32>,
    slot: Vec<u16>,
    /// `b` child slots per vertex, `NONE` when absent.
    children: Vec<u32>,
    /// `b` entries per vertex, NaN until drawn.
    vectors: Vec<f64>,
    scratch: Vec<u64>,
}

impl<'a> Builder<'a> {
    fn new(params: &'a SplitTreeParams, cap: usize) -> Self {
        let guess = (params.n as usize).min(cap).min(1 << 20);
        let b = params.b;
        Builder {
            params,
            cap,
            balls: Vec::with_capacity(guess),
            internal: Vec::with_capacity(guess),
            parent: Vec::with_capacity(guess),
            slot: Vec::with_capacity(guess),
            children: Vec::with_capacity(guess * b),
            vectors: Vec::with_capacity(guess * b),
            scratch: vec![0; b],
        }
    }

    fn add_vertex(&mut self, parent: u32, slot: usize, balls: u32) -> Result<u32> {
        let id = self.balls.len();
        if id >= self.cap {
            return Err(Error::ResourceLimit { cap: self.cap });
        }
        let b = self.params.b;
        self.balls.push(balls);
        self.internal.push(false);
        self.parent.push(parent);
        self.slot.push(slot as u16);
        self.children.extend(std::iter::repeat_n(NONE, b));
        self.vectors.extend(std::iter::repeat_n(f64::NAN, b));
        if parent != NONE {
            self.children[parent as usize * b + slot] = id as u32;
        }
        Ok(id as u32)
    }

    fn draw_vector(&mut self, v: usize, rng: &mut RandomStream) {
        let b = self.params.b;
        let row = &mut self.vectors[v * b..(v + 1) * b];
        if row[0].is_nan() {
            self.params.vector.sample_into(rng, row);
        }
    }

    fn pick_child(&self, v: usize, rng: &mut RandomStream) -> usize {
        let b = self.params.b;
        let row = &self.vectors[v * b..(v + 1) * b];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in row.iter().enumerate().take(b - 1) {
            acc += p;
            if u < acc {
                return i;
            }
        }
        b - 1
    }

    fn insert_sequential(&mut self, rng: &mut RandomStream) -> Result<()> {
        let p = self.params;
        self.add_vertex(NONE, 0, 0)?;
        let mut pending: Vec<(u32, u64)> = Vec::new();
        for _ in 0..p.n {
            let mut u = 0usize;
            while self.internal[u] {
                let i = self.pick_child(u, rng);
                let c = self.children[u * p.b + i];
                u = if c == NONE { self.add_vertex(u as u32, i, 0)? as usize } else { c as usize };
            }
            if self.balls[u] < p.s {
                self.balls[u] += 1;
                continue;
            }
            pending.push((u as u32, p.s as u64 + 1));
            while let Some((v, k)) = pending.pop() {
                let v = v as usize;
                self.balls[v] = p.s0;
                self.internal[v] = true;
                self.draw_vector(v, rng);
                self.scratch.fill(p.s1 as u64);
                for _ in 0..p.routed(k) {
                    let i = self.pick_child(v, rng);
                    self.scratch[i] += 1;
                }
                for i in 0..p.b {
                    let count = self.scratch[i];
                    if count == 0 {
                        continue;
                    }
                    let c = self.add_vertex(v as u32, i, count.min(p.s as u64) as u32)?;
                    if count > p.s as u64 {
                        pending.push((c, count));
                    }
                }
            }
        }
        Ok(())
    }

    fn insert_recursive(&mut self, rng: &mut RandomStream) -> Result<()> {
        let p = self.params;
        let mut totals: VecDeque<u64> = VecDeque::new();
        self.add_vertex(NONE, 0, 0)?;
        totals.push_back(p.n);
        let mut v = 0usize;
        while let Some(m) = totals.pop_front() {
            if m <= p.s as u64 {
                self.balls[v] = m as u32;
            } else {
                self.balls[v] = p.s0;
                self.internal[v] = true;
                self.draw_vector(v, rng);
                self.multinomial_split(v, p.routed(m), rng);
                for i in 0..p.b {
                    let count = self.scratch[i] + p.s1 as u64;
                    if count > 0 {
                        self.add_vertex(v as u32, i, 0)?;
                        totals.push_back(count);
                    }
                }
            }
            v += 1;
        }
        Ok(())
    }

    /// Fills `scratch` with a Multinomial(`trials`, V_v) draw.
    fn multinomial_split(&mut self, v: usize, trials: u64, rng: &mut RandomStream) {
        let b = self.params.b;
        let row = &self.vectors[v * b..(v + 1) * b];
        let mut left = trials;
        let mut mass = 1.0;
        for i in 0..b {
            if i == b - 1 || left == 0 {
                self.scratch[i] = left;
                left = 0;
                continue;
            }
            let prob = if mass > 0.0 { (row[i] / mass).clamp(0.0, 1.0) } else { 1.0 };
            let k = Binomial::new(left, prob).expect("probability in [0, 1]").sample(rng);
            self.scratch[i] = k;
            left -= k;
            mass -= row[i];
        }
    }

    fn finish(self, record: bool) -> SplitTree {
        let b = self.params.b;
        let len = self.balls.len();
        // Breadth-first order over child slots.
        let mut order = Vec::with_capacity(len);
        order.push(0usize);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &self.children[v * b..(v + 1) * b] {
                if c != NONE {
                    order.push(c as usize);
                }
            }
        }
        debug_assert_eq!(order.len(), len);
        let old: Vec<Vertex> = (0..len)
            .map(|i| Vertex {
                parent: self.parent[i],
                depth: 0,
                balls: self.balls[i],
                first_child: 0,
                child_count: 0,
                slot: self.slot[i],
            })
            .collect();
        let vertices = relabel(&old, &order, |o| self.slot[o]).expect("builder arena is a tree");
        let split_vectors = record.then(|| {
            let mut out = Vec::with_capacity(len * b);
            for &o in &order {
                out.extend_from_slice(&self.vectors[o * b..(o + 1) * b]);
            }
            out
        });
        SplitTree { vertices, b, n: self.params.n, params: Some(self.params.clone()), split_vectors }
    }
}

/// Balls stored in each vertex's subtree, indexed like the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtreeCounts(Vec<u64>);

impl SubtreeCounts {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn get(&self, v: usize) -> u64 {
        self.0[v]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Threshold `n / (t ln n)`; `+inf` at `t = 0`.
pub fn size_threshold(n: u64, t: f64) -> f64 {
    if t <= 0.0 {
        f64::INFINITY
    } else {
        n as f64 / (t * (n as f64).ln())
    }
}

/// `M_n(t)`: non-root vertices whose subtree holds at least `n / (t ln n)` balls.
pub fn m_statistic(counts: &SubtreeCounts, n: u64, t: f64) -> u64 {
    let threshold = size_threshold(n, t);
    counts.0.iter().skip(1).filter(|&&c| c as f64 >= threshold).count() as u64
}

/// `M_n(t)` at every point of `t_grid`, in one pass.
pub fn m_statistic_grid(counts: &SubtreeCounts, n: u64, t_grid: &[f64]) -> Vec<u64> {
    let thresholds: Vec<f64> = t_grid.iter().map(|&t| size_threshold(n, t)).collect();
    let mut out = vec![0u64; t_grid.len()];
    for &c in counts.0.iter().skip(1) {
        let c = c as f64;
        for (slot, &th) in out.iter_mut().zip(&thresholds) {
            if c >= th {
                *slot += 1;
            }
        }
    }
    out
}
