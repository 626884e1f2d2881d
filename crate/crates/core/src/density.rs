//! Context-conditioned kernel density of accepted responses.
//!
//! For a query context the reference set is every accepted response attached
//! to the k nearest stored contexts. A response embedding is scored by the
//! log of the mean RBF kernel value against that set:
//!
//! ```text
//! log p(x | h) = logsumexp_j( -|x - x_j|^2 / (2 sigma^2) ) - log m
//! ```
//!
//! with sigma chosen by the median heuristic over the reference set. The
//! value is always <= 0 and is only meaningful up to the ordering it induces.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::index::{squared_euclidean, Neighbor, NeighborIndex};
use crate::par;
use crate::seed;
use crate::store::Corpus;

/// Bandwidth used when every pairwise distance in the reference set is zero.
pub const DEGENERATE_SIGMA: f64 = 1e-6;
const MEDIAN_FLOOR: f64 = 1e-12;
/// Below this many pairs the pairwise distances are computed serially.
const PARALLEL_PAIR_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct KernelBandwidth(f64);

impl KernelBandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(KernelBandwidth(sigma))
        } else {
            Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityScore {
    pub log_density: f64,
    pub support_size: usize,
}

/// How the kernel bandwidth is chosen for local scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// Median heuristic over each neighborhood's responses.
    PerNeighborhood,
    /// One bandwidth for every query.
    Fixed(KernelBandwidth),
}

/// The k nearest contexts of a query and the responses attached to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    /// Nearest context rows, ascending distance.
    pub neighbors: Vec<Neighbor>,
    /// Context record indices in neighbor order (ids ascending within a row).
    pub context_indices: Vec<usize>,
    /// Response matrix rows attached to those contexts.
    pub response_rows: Vec<usize>,
}

impl Neighborhood {
    pub fn context_ids<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.context_indices
            .iter()
            .map(|&i| corpus.context_records()[i].id.as_str())
            .collect()
    }

    pub fn responses<'c>(&self, corpus: &'c Corpus) -> Vec<&'c [f32]> {
        let m = corpus.responses();
        self.response_rows.iter().map(|&r| m.row(r)).collect()
    }
}

/// Retrieves the `k` nearest contexts of `query` and pools their responses.
pub fn query_neighborhood(
    index: &NeighborIndex<'_>,
    corpus: &Corpus,
    query: &[f32],
    k: usize,
) -> Result<Neighborhood> {
    let neighbors = index.search(query, k)?;
    let mut context_indices = Vec::with_capacity(neighbors.len());
    let mut response_rows = Vec::new();
    for n in &neighbors {
        let mut at_row = corpus.contexts_at_row(n.row).to_vec();
        at_row.sort_by(|&a, &b| {
            corpus.context_records()[a]
                .id
                .cmp(&corpus.context_records()[b].id)
        });
        for ci in at_row {
            context_indices.push(ci);
            response_rows.extend_from_slice(corpus.responses_of(ci));
        }
    }
    Ok(Neighborhood {
        neighbors,
        context_indices,
        response_rows,
    })
}

/// Median of all pairwise Euclidean distances among `points`.
pub fn median_heuristic(points: &[&[f32]]) -> Result<KernelBandwidth> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let pairs = n * (n - 1) / 2;
    let row_distances = |i: usize| -> Vec<f64> {
        points[i + 1..]
            .iter()
            .map(|p| squared_euclidean(points[i], p))
            .collect()
    };
    let mut sq: Vec<f64> = if pairs >= PARALLEL_PAIR_THRESHOLD {
        par::map_range(n - 1, row_distances).concat()
    } else {
        (0..n - 1).flat_map(row_distances).collect()
    };
    // sqrt is monotone, so select on squared distances
    let upper = pairs / 2;
    let (lower_part, &mut hi, _) = sq.select_nth_unstable_by(upper, f64::total_cmp);
    let median = if pairs % 2 == 1 {
        hi.sqrt()
    } else {
        let lo = lower_part.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo.sqrt() + hi.sqrt())
    };
    if median < MEDIAN_FLOOR {
        return Ok(KernelBandwidth(DEGENERATE_SIGMA));
    }
    KernelBandwidth::new(median)
}

/// Median-heuristic bandwidth over a neighborhood's responses.
pub fn neighborhood_bandwidth(nbhd: &Neighborhood, corpus: &Corpus) -> Result<KernelBandwidth> {
    median_heuristic(&nbhd.responses(corpus))
}

pub fn rbf_kernel(x: &[f32], y: &[f32], sigma: KernelBandwidth) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let s = sigma.sigma();
    Ok((-squared_euclidean(x, y) / (2.0 * s * s)).exp())
}

/// `log(sum(exp(values)))` without overflow or underflow of the largest term.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log mean kernel value of `x` against `refs`.
pub fn log_mean_kernel(x: &[f32], refs: &[&[f32]], sigma: KernelBandwidth) -> Result<DensityScore> {
    if refs.is_empty() {
        return Err(Error::EmptyReferenceSet);
    }
    let s = sigma.sigma();
    let scale = 1.0 / (2.0 * s * s);
    let mut exponents = Vec::with_capacity(refs.len());
    for r in refs {
        if r.len() != x.len() {
            return Err(Error::DimMismatch {
                expected: x.len(),
                found: r.len(),
            });
        }
        exponents.push(-squared_euclidean(x, r) * scale);
    }
    let m = refs.len();
    let log_density = (log_sum_exp(&exponents) - (m as f64).ln()).min(0.0);
    Ok(DensityScore {
        log_density,
        support_size: m,
    })
}

pub fn local_log_density(
    x: &[f32],
    nbhd: &Neighborhood,
    corpus: &Corpus,
    sigma: KernelBandwidth,
) -> Result<DensityScore> {
    if nbhd.response_rows.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    log_mean_kernel(x, &nbhd.responses(corpus), sigma)
}

pub fn global_log_density(
    x: &[f32],
    global_refs: &[usize],
    corpus: &Corpus,
    sigma: KernelBandwidth,
) -> Result<DensityScore> {
    let m = corpus.responses();
    let refs: Vec<&[f32]> = global_refs.iter().map(|&r| m.row(r)).collect();
    log_mean_kernel(x, &refs, sigma)
}

/// A fixed random subset of response rows drawn once per corpus from the
/// `global-subset` stream of `seed`. Returned rows are ascending.
pub fn sample_global_refs(corpus: &Corpus, size: usize, seed: u64) -> Result<Vec<usize>> {
    let total = corpus.responses().len();
    if total == 0 || size == 0 {
        return Err(Error::EmptyReferenceSet);
    }
    let mut rows = if size >= total {
        (0..total).collect()
    } else {
        let mut rng = seed::substream(seed, seed::GLOBAL_SUBSET);
        sample(&mut rng, total, size).into_vec()
    };
    rows.sort_unstable();
    Ok(rows)
}

/// Global reference set with its median-heuristic bandwidth.
#[derive(Debug, Clone)]
pub struct GlobalReference {
    pub rows: Vec<usize>,
    pub sigma: KernelBandwidth,
}

impl GlobalReference {
    pub fn sample(corpus: &Corpus, size: usize, seed: u64) -> Result<Self> {
        let rows = sample_global_refs(corpus, size, seed)?;
        let m = corpus.responses();
        let points: Vec<&[f32]> = rows.iter().map(|&r| m.row(r)).collect();
        let sigma = median_heuristic(&points)?;
        Ok(GlobalReference { rows, sigma })
    }

    pub fn log_density(&self, x: &[f32], corpus: &Corpus) -> Result<DensityScore> {
        global_log_density(x, &self.rows, corpus, self.sigma)
    }
}
