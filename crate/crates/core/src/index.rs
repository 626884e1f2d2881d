//! Exact Euclidean k-nearest-neighbor search over context embeddings.
//!
//! Results are ordered by `(distance, tie_key)` ascending. The tie key of a
//! corpus row is the rank of its context id, so equidistant contexts come
//! back in ascending id order. Both search strategies compute distances with
//! the same routine, so the vantage-point tree returns exactly what a full
//! scan returns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::store::{Corpus, EmbeddingMatrix};

/// Relative and absolute slack on triangle-inequality pruning bounds. Pruning
/// only ever skips a subtree whose lower bound clears the current k-th
/// distance by more than rounding error.
const PRUNE_REL_SLACK: f64 = 1e-9;
const PRUNE_ABS_SLACK: f64 = 1e-12;
const LEAF_SIZE: usize = 16;

/// Euclidean distance accumulated in f64.
pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexKind {
    /// Full scan over every row.
    BruteForce,
    /// Vantage-point tree with exact search.
    #[default]
    VpTree,
}

#[derive(Debug)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        radius: f64,
        inside: Box<Node>,
        outside: Box<Node>,
    },
}

/// Exact kNN index borrowing the matrix it searches.
#[derive(Debug)]
pub struct NeighborIndex<'a> {
    points: &'a EmbeddingMatrix,
    tie_keys: Vec<u64>,
    root: Option<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    distance: f64,
    key: u64,
    row: usize,
}

impl Candidate {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.key.cmp(&other.key))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(worst) = self.heap.peek() {
            if c < *worst {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    /// Distance a subtree must be able to beat to matter.
    fn bound(&self) -> f64 {
        if self.heap.len() < self.k {
            f64::INFINITY
        } else {
            self.heap.peek().map_or(f64::INFINITY, |c| c.distance)
        }
    }

    fn into_sorted(self) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Neighbor {
                row: c.row,
                distance: c.distance,
            })
            .collect()
    }
}

fn may_contain(lower_bound: f64, bound: f64) -> bool {
    lower_bound <= bound * (1.0 + PRUNE_REL_SLACK) + PRUNE_ABS_SLACK
}

impl<'a> NeighborIndex<'a> {
    /// Index over a bare matrix; ties are broken by row.
    pub fn build(points: &'a EmbeddingMatrix, kind: IndexKind) -> Result<Self> {
        let keys = (0..points.len() as u64).collect();
        Self::with_tie_keys(points, keys, kind)
    }

    /// Index over a corpus' working context matrix with id-ordered ties.
    pub fn for_corpus(corpus: &'a Corpus, kind: IndexKind) -> Result<Self> {
        Self::with_tie_keys(corpus.contexts(), corpus.row_tie_keys().to_vec(), kind)
    }

    pub fn with_tie_keys(points: &'a EmbeddingMatrix, tie_keys: Vec<u64>, kind: IndexKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if tie_keys.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tie keys for {} points",
                tie_keys.len(),
                points.len()
            )));
        }
        let root = match kind {
            IndexKind::BruteForce => None,
            IndexKind::VpTree => {
                let mut rows: Vec<usize> = (0..points.len()).collect();
                Some(build_node(points, &mut rows))
            }
        };
        Ok(NeighborIndex {
            points,
            tie_keys,
            root,
        })
    }

    pub fn kind(&self) -> IndexKind {
        if self.root.is_some() {
            IndexKind::VpTree
        } else {
            IndexKind::BruteForce
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// The `min(k, len)` nearest rows to `query`, nearest first.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.points.dim() {
            return Err(Error::DimMismatch {
                expected: self.points.dim(),
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let mut top = TopK::new(k.min(self.points.len()));
        match &self.root {
            None => {
                for row in 0..self.points.len() {
                    self.offer(&mut top, query, row);
                }
            }
            Some(root) => self.descend(root, query, &mut top),
        }
        Ok(top.into_sorted())
    }

    /// Full scan regardless of how the index was built.
    pub fn search_brute_force(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        let flat = NeighborIndex {
            points: self.points,
            tie_keys: self.tie_keys.clone(),
            root: None,
        };
        flat.search(query, k)
    }

    fn offer(&self, top: &mut TopK, query: &[f32], row: usize) -> f64 {
        let distance = euclidean(query, self.points.row(row));
        top.offer(Candidate {
            distance,
            key: self.tie_keys[row],
            row,
        });
        distance
    }

    fn descend(&self, node: &Node, query: &[f32], top: &mut TopK) {
        match node {
            Node::Leaf(rows) => {
                for &row in rows {
                    self.offer(top, query, row);
                }
            }
            Node::Split {
                vantage,
                radius,
                inside,
                outside,
            } => {
                let d = self.offer(top, query, *vantage);
                // inside holds points at distance <= radius from the vantage
                // point, outside those at >= radius.
                if d < *radius {
                    if may_contain((d - radius).max(0.0), top.bound()) {
                        self.descend(inside, query, top);
                    }
                    if may_contain(radius - d, top.bound()) {
                        self.descend(outside, query, top);
                    }
                } else {
                    if may_contain(0.0f64.max(radius - d), top.bound()) {
                        self.descend(outside, query, top);
                    }
                    if may_contain(d - radius, top.bound()) {
                        self.descend(inside, query, top);
                    }
                }
            }
        }
    }
}

fn build_node(points: &EmbeddingMatrix, rows: &mut [usize]) -> Node {
    if rows.len() <= LEAF_SIZE {
        return Node::Leaf(rows.to_vec());
    }
    let vantage = rows[0];
    let rest = &mut rows[1..];
    let vp = points.row(vantage);
    let mut with_dist: Vec<(f64, usize)> = rest
        .iter()
        .map(|&r| (euclidean(vp, points.row(r)), r))
        .collect();
    let mid = with_dist.len() / 2;
    with_dist.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let radius = with_dist[mid].0;
    for (slot, (_, r)) in rest.iter_mut().zip(&with_dist) {
        *slot = *r;
    }
    let (inside, outside) = rest.split_at_mut(mid + 1);
    Node::Split {
        vantage,
        radius,
        inside: Box::new(build_node(points, inside)),
        outside: Box::new(build_node(points, outside)),
    }
}
