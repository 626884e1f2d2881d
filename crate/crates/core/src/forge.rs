//! Pseudo-preference pairs from density rankings of candidate pools.
//!
//! Each pool's candidates are ranked by local acceptance density under the
//! pool context's neighborhood. The top and bottom candidates form the
//! (chosen, rejected) pair. Pools whose candidates all sit below a low
//! percentile of the neighborhood's own leave-one-out densities lie off the
//! accepted region; their pairs are emitted with an `UNINFORMATIVE` flag.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{
    log_mean_kernel, query_neighborhood, BandwidthRule, KernelBandwidth, Neighborhood,
};
use crate::error::{Error, Result};
use crate::eval::resolve_bandwidth;
use crate::index::NeighborIndex;
use crate::ndjson;
use crate::par;
use crate::stats;
use crate::store::Corpus;

pub const DEFAULT_THRESHOLD_PERCENTILE: f64 = 5.0;

/// Quantiles reported in [`ManifoldDiagnostics::loo_density_quantiles`].
const REPORTED_QUANTILES: [f64; 7] = [0.0, 5.0, 25.0, 50.0, 75.0, 95.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    CorpusSampled,
    #[default]
    ExternallyGenerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub candidate_id: String,
    pub row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub source: CandidateSource,
}

/// Candidates for one context. `context_row` indexes the context matrix and
/// candidate rows the response matrix of the pool corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatePool {
    pub context_id: String,
    pub context_row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_text: Option<String>,
    pub candidates: Vec<Candidate>,
}

pub fn read_pools(path: &Path) -> Result<Vec<CandidatePool>> {
    ndjson::read(path)
}

pub fn write_pools(path: &Path, pools: &[CandidatePool]) -> Result<()> {
    ndjson::write(path, pools)
}

pub fn validate_pool(pool: &CandidatePool, pool_corpus: &Corpus) -> Result<()> {
    if pool.candidates.len() < 2 {
        return Err(Error::TooFewCandidates {
            context_id: pool.context_id.clone(),
            found: pool.candidates.len(),
        });
    }
    if pool.context_row >= pool_corpus.contexts().len() {
        return Err(Error::DanglingRef(format!(
            "pool {:?} context_row {}",
            pool.context_id, pool.context_row
        )));
    }
    let mut ids = HashSet::new();
    for c in &pool.candidates {
        if !ids.insert(c.candidate_id.as_str()) {
            return Err(Error::DuplicateId(c.candidate_id.clone()));
        }
        if c.row >= pool_corpus.responses().len() {
            return Err(Error::DanglingRef(format!(
                "candidate {:?} row {}",
                c.candidate_id, c.row
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub candidate_id: String,
    pub row: usize,
    pub log_density: f64,
}

/// A pool with candidates in descending density order, plus the
/// neighborhood and bandwidth they were scored under.
#[derive(Debug, Clone)]
pub struct RankedPool<'p> {
    pub pool: &'p CandidatePool,
    pub ranked: Vec<RankedCandidate>,
    pub neighborhood: Neighborhood,
    pub sigma: KernelBandwidth,
}

/// Where pools are scored: the reference corpus, its index, and the corpus
/// holding the pool embeddings.
#[derive(Clone, Copy)]
pub struct ForgeContext<'a> {
    pub pool_corpus: &'a Corpus,
    pub train: &'a Corpus,
    pub index: &'a NeighborIndex<'a>,
    pub k: usize,
    pub bandwidth: BandwidthRule,
}

/// Ranks candidates by descending local log density; equal densities are
/// ordered by ascending candidate id.
pub fn rank_candidates<'p>(pool: &'p CandidatePool, ctx: &ForgeContext<'_>) -> Result<RankedPool<'p>> {
    validate_pool(pool, ctx.pool_corpus)?;
    let h = ctx.pool_corpus.contexts().row(pool.context_row);
    let neighborhood = query_neighborhood(ctx.index, ctx.train, h, ctx.k)?;
    if neighborhood.response_rows.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let sigma = resolve_bandwidth(ctx.bandwidth, &neighborhood, ctx.train)?;
    let refs = neighborhood.responses(ctx.train);
    let mut ranked = pool
        .candidates
        .iter()
        .map(|c| {
            let x = ctx.pool_corpus.responses().row(c.row);
            Ok(RankedCandidate {
                candidate_id: c.candidate_id.clone(),
                row: c.row,
                log_density: log_mean_kernel(x, &refs, sigma)?.log_density,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.log_density
            .total_cmp(&a.log_density)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    Ok(RankedPool {
        pool,
        ranked,
        neighborhood,
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairFlag {
    Uninformative,
    SmallGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// One pair per pool: highest against lowest density.
    #[default]
    TopBottom,
    /// Every consecutive pair of the ranking.
    Adjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgePolicy {
    pub min_gap: f64,
    pub mode: PairMode,
    pub threshold_percentile: f64,
}

impl Default for ForgePolicy {
    fn default() -> Self {
        ForgePolicy {
            min_gap: 0.0,
            mode: PairMode::TopBottom,
            threshold_percentile: DEFAULT_THRESHOLD_PERCENTILE,
        }
    }
}

/// Text when the source carried it, otherwise the embedding row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text(String),
    Row(usize),
}

impl Payload {
    fn of(text: &Option<String>, row: usize) -> Payload {
        match text {
            Some(t) => Payload::Text(t.clone()),
            None => Payload::Row(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub prompt: Payload,
    pub chosen: Payload,
    pub rejected: Payload,
    pub chosen_log_density: f64,
    pub rejected_log_density: f64,
    pub gap: f64,
    pub flags: Vec<PairFlag>,
    pub context_id: String,
    pub chosen_id: String,
    pub rejected_id: String,
}

/// Pairs from a ranked pool. No `UNINFORMATIVE` flag is set here; see
/// [`forge_pool`].
pub fn forge_pairs(ranked: &RankedPool<'_>, policy: &ForgePolicy) -> Result<Vec<PseudoPair>> {
    if policy.min_gap.is_nan() || policy.min_gap < 0.0 {
        return Err(Error::InvalidArgument(format!("min_gap {} is negative", policy.min_gap)));
    }
    let n = ranked.ranked.len();
    if n < 2 {
        return Err(Error::TooFewCandidates {
            context_id: ranked.pool.context_id.clone(),
            found: n,
        });
    }
    let positions: Vec<(usize, usize)> = match policy.mode {
        PairMode::TopBottom => vec![(0, n - 1)],
        PairMode::Adjacent => (0..n - 1).map(|i| (i, i + 1)).collect(),
    };
    let pool = ranked.pool;
    let text_of = |id: &str| {
        pool.candidates
            .iter()
            .find(|c| c.candidate_id == id)
            .and_then(|c| c.text.clone())
    };
    Ok(positions
        .into_iter()
        .map(|(hi, lo)| {
            let (c, r) = (&ranked.ranked[hi], &ranked.ranked[lo]);
            let gap = c.log_density - r.log_density;
            let mut flags = Vec::new();
            // a zero gap carries no preference whatever the policy
            if gap < policy.min_gap || gap == 0.0 {
                flags.push(PairFlag::SmallGap);
            }
            PseudoPair {
                prompt: Payload::of(&pool.context_text, pool.context_row),
                chosen: Payload::of(&text_of(&c.candidate_id), c.row),
                rejected: Payload::of(&text_of(&r.candidate_id), r.row),
                chosen_log_density: c.log_density,
                rejected_log_density: r.log_density,
                gap,
                flags,
                context_id: pool.context_id.clone(),
                chosen_id: c.candidate_id.clone(),
                rejected_id: r.candidate_id.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDiagnostics {
    /// (percentile, value) over leave-one-out densities of the neighborhood.
    pub loo_density_quantiles: Vec<(f64, f64)>,
    pub threshold_percentile: f64,
    pub threshold_value: f64,
    /// (candidate id, percentile of its density within the LOO distribution).
    pub candidate_percentiles: Vec<(String, f64)>,
    pub uninformative: bool,
}

/// Compares candidate densities against the leave-one-out densities of the
/// neighborhood's own responses (each scored against the others with the
/// same bandwidth). The pool is uninformative when every candidate falls
/// strictly below the `threshold_percentile` of that distribution.
pub fn detect_uninformative(
    ranked: &RankedPool<'_>,
    train: &Corpus,
    threshold_percentile: f64,
) -> Result<ManifoldDiagnostics> {
    if !(0.0..=100.0).contains(&threshold_percentile) {
        return Err(Error::InvalidArgument(format!(
            "threshold percentile {threshold_percentile} outside [0, 100]"
        )));
    }
    let refs = ranked.neighborhood.responses(train);
    let m = refs.len();
    if m < 3 {
        return Err(Error::NeighborhoodTooSmall(m));
    }
    let mut loo = (0..m)
        .map(|j| {
            let others: Vec<&[f32]> = refs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, r)| *r)
                .collect();
            Ok(log_mean_kernel(refs[j], &others, ranked.sigma)?.log_density)
        })
        .collect::<Result<Vec<f64>>>()?;
    loo.sort_by(f64::total_cmp);

    let threshold_value = stats::percentile_sorted(&loo, threshold_percentile);
    let candidate_percentiles = ranked
        .ranked
        .iter()
        .map(|c| {
            let below = loo.partition_point(|&v| v <= c.log_density);
            (c.candidate_id.clone(), 100.0 * below as f64 / m as f64)
        })
        .collect();
    Ok(ManifoldDiagnostics {
        loo_density_quantiles: REPORTED_QUANTILES
            .iter()
            .map(|&q| (q, stats::percentile_sorted(&loo, q)))
            .collect(),
        threshold_percentile,
        threshold_value,
        candidate_percentiles,
        uninformative: ranked.ranked.iter().all(|c| c.log_density < threshold_value),
    })
}

#[derive(Debug, Clone)]
pub struct ForgedPool {
    pub pairs: Vec<PseudoPair>,
    pub diagnostics: ManifoldDiagnostics,
}

/// Rank, diagnose and pair one pool.
pub fn forge_pool(pool: &CandidatePool, ctx: &ForgeContext<'_>, policy: &ForgePolicy) -> Result<ForgedPool> {
    let ranked = rank_candidates(pool, ctx)?;
    let diagnostics = detect_uninformative(&ranked, ctx.train, policy.threshold_percentile)?;
    let mut pairs = forge_pairs(&ranked, policy)?;
    if diagnostics.uninformative {
        for p in &mut pairs {
            p.flags.insert(0, PairFlag::Uninformative);
        }
    }
    Ok(ForgedPool { pairs, diagnostics })
}

/// Forges every pool; output follows input order.
pub fn forge_pools(pools: &[CandidatePool], ctx: &ForgeContext<'_>, policy: &ForgePolicy) -> Result<Vec<ForgedPool>> {
    par::try_map(pools, |p| forge_pool(p, ctx, policy))
}

pub fn export_pairs(pairs: &[PseudoPair], path: &Path) -> Result<()> {
    ndjson::write(path, pairs)
}

pub fn read_pseudo_pairs(path: &Path) -> Result<Vec<PseudoPair>> {
    ndjson::read(path)
}
