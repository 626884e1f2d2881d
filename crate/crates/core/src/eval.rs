//! Scoring labeled preference pairs and the analyses built on top of it.
//!
//! A scorer turns each pair into a signed margin (positive favors response
//! A). Accuracy counts a pair as won when the margin's sign agrees with the
//! label; exact ties earn half credit unless strict mode is selected.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{
    local_log_density, median_heuristic, query_neighborhood, BandwidthRule, GlobalReference,
    KernelBandwidth, Neighborhood,
};
use crate::error::{Error, Result};
use crate::index::{IndexKind, NeighborIndex};
use crate::ndjson;
use crate::par;
use crate::seed;
use crate::stats;
use crate::store::Corpus;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }
}

/// A labeled comparison. Rows index the context and response matrices of
/// the corpus the pair file was exported with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferencePair {
    pub pair_id: String,
    #[serde(alias = "context_embedding_row")]
    pub context_row: usize,
    pub response_a_row: usize,
    pub response_b_row: usize,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_ratio: Option<f64>,
    #[serde(default)]
    pub community: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_a_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_b_text: Option<String>,
}

impl PreferencePair {
    /// Same comparison with A and B exchanged.
    pub fn swapped(&self) -> PreferencePair {
        PreferencePair {
            response_a_row: self.response_b_row,
            response_b_row: self.response_a_row,
            label: self.label.flipped(),
            response_a_text: self.response_b_text.clone(),
            response_b_text: self.response_a_text.clone(),
            ..self.clone()
        }
    }
}

pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePair>> {
    ndjson::read(path)
}

pub fn write_pairs(path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    ndjson::write(path, pairs)
}

/// Checks that pair ids are unique, rows resolve against `corpus`, and
/// score ratios are positive where present.
pub fn validate_pairs(pairs: &[PreferencePair], corpus: &Corpus) -> Result<()> {
    let mut ids = HashSet::with_capacity(pairs.len());
    let (nc, nr) = (corpus.contexts().len(), corpus.responses().len());
    for p in pairs {
        if !ids.insert(p.pair_id.as_str()) {
            return Err(Error::DuplicateId(p.pair_id.clone()));
        }
        if p.context_row >= nc {
            return Err(Error::DanglingRef(format!(
                "pair {:?} context_row {} of {nc}",
                p.pair_id, p.context_row
            )));
        }
        for row in [p.response_a_row, p.response_b_row] {
            if row >= nr {
                return Err(Error::DanglingRef(format!(
                    "pair {:?} response row {row} of {nr}",
                    p.pair_id
                )));
            }
        }
        if let Some(s) = p.score_ratio {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "pair {:?} has score_ratio {s}",
                    p.pair_id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub value: f64,
    pub predicted: Prediction,
}

impl Margin {
    pub fn new(value: f64) -> Margin {
        let predicted = if value > 0.0 {
            Prediction::A
        } else if value < 0.0 {
            Prediction::B
        } else {
            Prediction::Tie
        };
        Margin { value, predicted }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Exact ties earn half a win.
    #[default]
    HalfCredit,
    /// Only a strictly positive margin toward the preferred response counts.
    Strict,
}

pub fn credit(margin: Margin, label: Label, tie_mode: TieMode) -> f64 {
    match (margin.predicted, label) {
        (Prediction::A, Label::A) | (Prediction::B, Label::B) => 1.0,
        (Prediction::Tie, _) => match tie_mode {
            TieMode::HalfCredit => 0.5,
            TieMode::Strict => 0.0,
        },
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    KnnMajority,
    GlobalDensity,
    LocalDensity,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Random,
        Method::KnnMajority,
        Method::GlobalDensity,
        Method::LocalDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::KnnMajority => "knn_majority",
            Method::GlobalDensity => "global_density",
            Method::LocalDensity => "local_density",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Method::Random),
            "knn" | "knn_majority" => Ok(Method::KnnMajority),
            "global" | "global_density" => Ok(Method::GlobalDensity),
            "local" | "local_density" => Ok(Method::LocalDensity),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Produces a margin for each labeled pair. Implementations must be pure
/// functions of the pair so that batch scoring can fan out freely.
pub trait PairScorer: Sync {
    fn method(&self) -> Method;
    fn margin(&self, pair: &PreferencePair) -> Result<Margin>;
}

/// Margin from local acceptance density: neighborhood of the pair's context,
/// bandwidth by `rule`, and `density(A) - density(B)`.
pub fn score_pair_local(
    pair: &PreferencePair,
    pair_corpus: &Corpus,
    train: &Corpus,
    index: &NeighborIndex<'_>,
    k: usize,
    rule: BandwidthRule,
) -> Result<Margin> {
    let h = pair_corpus.contexts().row(pair.context_row);
    let nbhd = query_neighborhood(index, train, h, k)?;
    local_margin(pair, pair_corpus, train, &nbhd, rule)
}

fn local_margin(
    pair: &PreferencePair,
    pair_corpus: &Corpus,
    train: &Corpus,
    nbhd: &Neighborhood,
    rule: BandwidthRule,
) -> Result<Margin> {
    if nbhd.response_rows.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let sigma = resolve_bandwidth(rule, nbhd, train)?;
    let responses = pair_corpus.responses();
    let a = local_log_density(responses.row(pair.response_a_row), nbhd, train, sigma)?;
    let b = local_log_density(responses.row(pair.response_b_row), nbhd, train, sigma)?;
    Ok(Margin::new(a.log_density - b.log_density))
}

pub(crate) fn resolve_bandwidth(
    rule: BandwidthRule,
    nbhd: &Neighborhood,
    train: &Corpus,
) -> Result<KernelBandwidth> {
    match rule {
        BandwidthRule::PerNeighborhood => median_heuristic(&nbhd.responses(train)),
        BandwidthRule::Fixed(s) => Ok(s),
    }
}

pub struct LocalDensityScorer<'a> {
    pub pair_corpus: &'a Corpus,
    pub train: &'a Corpus,
    pub index: &'a NeighborIndex<'a>,
    pub k: usize,
    pub bandwidth: BandwidthRule,
}

impl PairScorer for LocalDensityScorer<'_> {
    fn method(&self) -> Method {
        Method::LocalDensity
    }

    fn margin(&self, pair: &PreferencePair) -> Result<Margin> {
        score_pair_local(pair, self.pair_corpus, self.train, self.index, self.k, self.bandwidth)
    }
}

pub struct GlobalDensityScorer<'a> {
    pub pair_corpus: &'a Corpus,
    pub train: &'a Corpus,
    pub global: GlobalReference,
}

impl<'a> GlobalDensityScorer<'a> {
    pub fn new(pair_corpus: &'a Corpus, train: &'a Corpus, subset_size: usize, seed: u64) -> Result<Self> {
        Ok(GlobalDensityScorer {
            pair_corpus,
            train,
            global: GlobalReference::sample(train, subset_size, seed)?,
        })
    }
}

impl PairScorer for GlobalDensityScorer<'_> {
    fn method(&self) -> Method {
        Method::GlobalDensity
    }

    fn margin(&self, pair: &PreferencePair) -> Result<Margin> {
        let r = self.pair_corpus.responses();
        let a = self.global.log_density(r.row(pair.response_a_row), self.train)?;
        let b = self.global.log_density(r.row(pair.response_b_row), self.train)?;
        Ok(Margin::new(a.log_density - b.log_density))
    }
}

/// Random margins from a standard normal keyed by `(seed, pair_id)`.
pub struct RandomScorer {
    pub seed: u64,
}

impl PairScorer for RandomScorer {
    fn method(&self) -> Method {
        Method::Random
    }

    fn margin(&self, pair: &PreferencePair) -> Result<Margin> {
        let mut rng = seed::keyed_substream(self.seed, seed::RANDOM_BASELINE, &pair.pair_id);
        let v: f64 = StandardNormal.sample(&mut rng);
        Ok(Margin::new(v))
    }
}

/// Majority label among labeled training pairs whose contexts are the k
/// nearest to the query context. Uses training labels, unlike the density
/// scorers.
pub struct KnnMajorityScorer<'a> {
    pair_corpus: &'a Corpus,
    index: NeighborIndex<'a>,
    /// (votes for A, votes for B) per training context row.
    votes: Vec<(u32, u32)>,
    k: usize,
}

impl<'a> KnnMajorityScorer<'a> {
    /// `train_pairs` rows index the context matrix of `train`.
    pub fn new(
        pair_corpus: &'a Corpus,
        train: &'a Corpus,
        train_pairs: &[PreferencePair],
        k: usize,
    ) -> Result<Self> {
        let index = NeighborIndex::for_corpus(train, IndexKind::default())?;
        let mut votes = vec![(0u32, 0u32); train.contexts().len()];
        for p in train_pairs {
            let slot = votes.get_mut(p.context_row).ok_or_else(|| {
                Error::DanglingRef(format!(
                    "training pair {:?} context_row {}",
                    p.pair_id, p.context_row
                ))
            })?;
            match p.label {
                Label::A => slot.0 += 1,
                Label::B => slot.1 += 1,
            }
        }
        Ok(KnnMajorityScorer {
            pair_corpus,
            index,
            votes,
            k,
        })
    }
}

impl PairScorer for KnnMajorityScorer<'_> {
    fn method(&self) -> Method {
        Method::KnnMajority
    }

    fn margin(&self, pair: &PreferencePair) -> Result<Margin> {
        let h = self.pair_corpus.contexts().row(pair.context_row);
        baseline_knn_majority(&self.index, &self.votes, h, self.k)
    }
}

/// Unweighted vote over the labels attached to the `k` nearest training
/// contexts; the margin is `(votes_A - votes_B) / votes`.
pub fn baseline_knn_majority(
    index: &NeighborIndex<'_>,
    votes_by_row: &[(u32, u32)],
    query: &[f32],
    k: usize,
) -> Result<Margin> {
    let (mut a, mut b) = (0u64, 0u64);
    for n in index.search(query, k)? {
        let (va, vb) = votes_by_row[n.row];
        a += va as u64;
        b += vb as u64;
    }
    if a + b == 0 {
        return Err(Error::NoLabeledNeighbors);
    }
    Ok(Margin::new((a as f64 - b as f64) / (a + b) as f64))
}

/// Scorer backed by a fixed table of margins keyed by pair id.
pub struct MarginTable {
    pub method: Method,
    pub margins: HashMap<String, f64>,
}

impl PairScorer for MarginTable {
    fn method(&self) -> Method {
        self.method
    }

    fn margin(&self, pair: &PreferencePair) -> Result<Margin> {
        self.margins
            .get(&pair.pair_id)
            .map(|&v| Margin::new(v))
            .ok_or_else(|| Error::DanglingRef(format!("no margin for pair {:?}", pair.pair_id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub bootstrap_n: usize,
    pub seed: u64,
    pub tie_mode: TieMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            bootstrap_n: 1000,
            seed: 0,
            tie_mode: TieMode::HalfCredit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub method: Method,
    pub n_pairs: usize,
    pub accuracy: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub half_width: f64,
    pub ties: usize,
    pub bootstrap_n: usize,
    pub tie_mode: TieMode,
    pub seed: u64,
}

/// Scores every pair and reports accuracy with a 95% percentile bootstrap
/// interval.
pub fn evaluate(pairs: &[PreferencePair], scorer: &dyn PairScorer, opts: EvalOptions) -> Result<AccuracyReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let margins = score_all(pairs, scorer)?;
    Ok(report_from_margins(scorer.method(), pairs, &margins, opts))
}

pub fn score_all(pairs: &[PreferencePair], scorer: &dyn PairScorer) -> Result<Vec<Margin>> {
    par::try_map(pairs, |p| scorer.margin(p))
}

pub fn report_from_margins(
    method: Method,
    pairs: &[PreferencePair],
    margins: &[Margin],
    opts: EvalOptions,
) -> AccuracyReport {
    let mut credits: Vec<f64> = pairs
        .iter()
        .zip(margins)
        .map(|(p, m)| credit(*m, p.label, opts.tie_mode))
        .collect();
    // the bootstrap sees only the multiset of credits, so the report does not
    // depend on pair order
    credits.sort_by(f64::total_cmp);
    let n = credits.len();
    let accuracy = credits.iter().sum::<f64>() / n as f64;
    let (lo, hi) = stats::bootstrap_mean_ci(&credits, opts.bootstrap_n, opts.seed);
    let ci_lo = lo.min(accuracy);
    let ci_hi = hi.max(accuracy);
    AccuracyReport {
        method,
        n_pairs: n,
        accuracy,
        ci_lo,
        ci_hi,
        half_width: (ci_hi - ci_lo) / 2.0,
        ties: margins.iter().filter(|m| m.predicted == Prediction::Tie).count(),
        bootstrap_n: opts.bootstrap_n,
        tie_mode: opts.tie_mode,
        seed: opts.seed,
    }
}

pub fn baseline_random(pairs: &[PreferencePair], opts: EvalOptions) -> Result<AccuracyReport> {
    evaluate(pairs, &RandomScorer { seed: opts.seed }, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementBin {
    pub median_score_ratio: f64,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub method: Method,
    pub bins: Vec<AgreementBin>,
    pub spearman_rho: f64,
    pub kendall_tau: f64,
    pub p_spearman: f64,
    pub p_kendall: f64,
    pub permutations: usize,
}

/// Bins pairs into `n_bins` equal-count quantile bins of score_ratio and
/// correlates bin median score_ratio with bin accuracy.
pub fn correlate_agreement(
    pairs: &[PreferencePair],
    scorer: &dyn PairScorer,
    n_bins: usize,
    permutations: usize,
    opts: EvalOptions,
) -> Result<CorrelationReport> {
    if n_bins < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 bins, got {n_bins}")));
    }
    if pairs.len() < n_bins {
        return Err(Error::InvalidArgument(format!(
            "{} pairs cannot fill {n_bins} bins",
            pairs.len()
        )));
    }
    let ratios = pairs
        .iter()
        .map(|p| p.score_ratio.ok_or_else(|| Error::MissingScoreRatio(p.pair_id.clone())))
        .collect::<Result<Vec<f64>>>()?;
    if ratios.iter().all(|&r| r == ratios[0]) {
        return Err(Error::NoVariance);
    }

    let margins = score_all(pairs, scorer)?;
    let credits: Vec<f64> = pairs
        .iter()
        .zip(&margins)
        .map(|(p, m)| credit(*m, p.label, opts.tie_mode))
        .collect();

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| {
        ratios[a]
            .total_cmp(&ratios[b])
            .then_with(|| pairs[a].pair_id.cmp(&pairs[b].pair_id))
    });
    let n = pairs.len();
    let bins: Vec<AgreementBin> = (0..n_bins)
        .map(|i| {
            let members = &order[i * n / n_bins..(i + 1) * n / n_bins];
            let r: Vec<f64> = members.iter().map(|&j| ratios[j]).collect();
            AgreementBin {
                median_score_ratio: stats::median(&r),
                accuracy: members.iter().map(|&j| credits[j]).sum::<f64>() / members.len() as f64,
                n: members.len(),
            }
        })
        .collect();

    let x: Vec<f64> = bins.iter().map(|b| b.median_score_ratio).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.accuracy).collect();
    Ok(CorrelationReport {
        method: scorer.method(),
        spearman_rho: stats::spearman(&x, &y),
        kendall_tau: stats::kendall_tau_b(&x, &y),
        p_spearman: stats::permutation_p_value(&x, &y, stats::spearman, permutations, opts.seed, seed::PERMUTATION),
        p_kendall: stats::permutation_p_value(&x, &y, stats::kendall_tau_b, permutations, opts.seed, seed::PERMUTATION),
        permutations,
        bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySweep {
    pub community: String,
    pub n_pairs: usize,
    /// Accuracy per entry of `k_values`.
    pub accuracies: Vec<f64>,
    pub best_k: usize,
    pub best_accuracy: f64,
    /// `best_accuracy - accuracy` per k.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub k_values: Vec<usize>,
    pub communities: Vec<CommunitySweep>,
    /// Largest delta across communities, per k.
    pub worst_delta: Vec<f64>,
    pub worst_case: f64,
}

/// Local-density accuracy for each neighborhood size, per community.
///
/// Each pair's context is searched once at the largest k; smaller
/// neighborhoods are prefixes of that result, which the index's total
/// ordering makes exact.
pub fn k_sweep(
    pairs: &[PreferencePair],
    pair_corpus: &Corpus,
    train: &Corpus,
    index: &NeighborIndex<'_>,
    k_values: &[usize],
    rule: BandwidthRule,
    tie_mode: TieMode,
) -> Result<SweepReport> {
    if k_values.is_empty() || k_values[0] == 0 || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "k values must be positive and strictly ascending".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let k_max = *k_values.last().expect("non-empty");
    let per_pair: Vec<Vec<f64>> = par::try_map(pairs, |p| {
        let full = query_neighborhood(index, train, pair_corpus.contexts().row(p.context_row), k_max)?;
        k_values
            .iter()
            .map(|&k| {
                let nbhd = prefix_neighborhood(&full, train, k);
                local_margin(p, pair_corpus, train, &nbhd, rule).map(|m| credit(m, p.label, tie_mode))
            })
            .collect()
    })?;

    let mut by_community: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_community.entry(p.community.as_str()).or_default().push(i);
    }
    let communities: Vec<CommunitySweep> = by_community
        .into_iter()
        .map(|(name, members)| {
            let accuracies: Vec<f64> = (0..k_values.len())
                .map(|ki| members.iter().map(|&i| per_pair[i][ki]).sum::<f64>() / members.len() as f64)
                .collect();
            let (best_i, best_accuracy) = accuracies
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, a)| if a > acc.1 { (i, a) } else { acc });
            CommunitySweep {
                community: name.to_string(),
                n_pairs: members.len(),
                deltas: accuracies.iter().map(|a| best_accuracy - a).collect(),
                accuracies,
                best_k: k_values[best_i],
                best_accuracy,
            }
        })
        .collect();

    let worst_delta: Vec<f64> = (0..k_values.len())
        .map(|ki| communities.iter().map(|c| c.deltas[ki]).fold(0.0, f64::max))
        .collect();
    let worst_case = worst_delta.iter().copied().fold(0.0, f64::max);
    Ok(SweepReport {
        k_values: k_values.to_vec(),
        communities,
        worst_delta,
        worst_case,
    })
}

fn prefix_neighborhood(full: &Neighborhood, train: &Corpus, k: usize) -> Neighborhood {
    let neighbors: Vec<_> = full.neighbors.iter().take(k).copied().collect();
    let mut context_indices = Vec::new();
    let mut response_rows = Vec::new();
    let rows: HashSet<usize> = neighbors.iter().map(|n| n.row).collect();
    for &ci in &full.context_indices {
        if rows.contains(&train.context_records()[ci].embedding_row) {
            context_indices.push(ci);
            response_rows.extend_from_slice(train.responses_of(ci));
        }
    }
    Neighborhood {
        neighbors,
        context_indices,
        response_rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub train_size: usize,
    pub accuracy: f64,
    pub normalized: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub curve: Vec<CurvePoint>,
    pub ausc: f64,
    pub pairs_to_95: usize,
}

/// Normalized area under a saturation curve: accuracies are divided by
/// their maximum and integrated with the trapezoid rule over the size axis,
/// then divided by the area of the enclosing unit-height rectangle.
/// A single-point curve has area 1.
pub fn ausc(curve: &[(f64, f64)]) -> Result<f64> {
    validate_curve(curve)?;
    let peak = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if curve.len() == 1 {
        return Ok(1.0);
    }
    let (mut area, mut width) = (0.0, 0.0);
    for w in curve.windows(2) {
        let dx = w[1].0 - w[0].0;
        area += dx * (w[0].1 / peak + w[1].1 / peak) / 2.0;
        width += dx;
    }
    Ok(area / width)
}

/// Smallest size whose value reaches 95% of the curve's peak.
pub fn pairs_to_95(curve: &[(f64, f64)]) -> Result<f64> {
    validate_curve(curve)?;
    let peak = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(curve
        .iter()
        .find(|p| p.1 >= 0.95 * peak)
        .expect("the peak itself qualifies")
        .0)
}

fn validate_curve(curve: &[(f64, f64)]) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::InvalidSizes("empty curve".into()));
    }
    if curve.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidSizes("sizes must be strictly increasing".into()));
    }
    if curve.iter().any(|p| !p.1.is_finite() || p.1 < 0.0) {
        return Err(Error::InvalidSizes("accuracies must be finite and non-negative".into()));
    }
    if curve.iter().all(|p| p.1 == 0.0) {
        return Err(Error::InvalidSizes("curve peak is zero".into()));
    }
    Ok(())
}

/// Re-evaluates local-density accuracy on nested random subsets of the
/// training contexts. Subsets are prefixes of one permutation drawn from the
/// `efficiency` stream, so every larger subset contains the smaller ones.
#[allow(clippy::too_many_arguments)]
pub fn data_efficiency(
    pairs: &[PreferencePair],
    pair_corpus: &Corpus,
    train: &Corpus,
    train_sizes: &[usize],
    k: usize,
    rule: BandwidthRule,
    opts: EvalOptions,
) -> Result<EfficiencyReport> {
    let total = train.context_records().len();
    if train_sizes.is_empty() {
        return Err(Error::InvalidSizes("no sizes given".into()));
    }
    if train_sizes[0] == 0 || train_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSizes("sizes must be positive and strictly ascending".into()));
    }
    if *train_sizes.last().expect("non-empty") > total {
        return Err(Error::InvalidSizes(format!(
            "largest size exceeds the {total} training contexts"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seed::substream(opts.seed, seed::EFFICIENCY));

    let mut curve = Vec::with_capacity(train_sizes.len());
    for &size in train_sizes {
        let sub = train.subset(&order[..size])?;
        let index = NeighborIndex::for_corpus(&sub, IndexKind::default())?;
        let scorer = LocalDensityScorer {
            pair_corpus,
            train: &sub,
            index: &index,
            k,
            bandwidth: rule,
        };
        let report = evaluate(pairs, &scorer, opts)?;
        curve.push(CurvePoint {
            train_size: size,
            accuracy: report.accuracy,
            normalized: 0.0,
            ci_lo: report.ci_lo,
            ci_hi: report.ci_hi,
        });
    }
    let peak = curve.iter().map(|p| p.accuracy).fold(0.0, f64::max);
    for p in &mut curve {
        p.normalized = if peak > 0.0 { p.accuracy / peak } else { 0.0 };
    }
    let xy: Vec<(f64, f64)> = curve.iter().map(|p| (p.train_size as f64, p.accuracy)).collect();
    Ok(EfficiencyReport {
        ausc: ausc(&xy)?,
        pairs_to_95: pairs_to_95(&xy)? as usize,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{ContextRecord, EmbeddingMatrix, ResponseRecord};

    fn pair(id: &str, label: Label) -> PreferencePair {
        PreferencePair {
            pair_id: id.into(),
            context_row: 0,
            response_a_row: 0,
            response_b_row: 1,
            label,
            score_ratio: None,
            community: "c".into(),
            context_text: None,
            response_a_text: None,
            response_b_text: None,
        }
    }

    fn table(entries: &[(&str, f64)]) -> MarginTable {
        MarginTable {
            method: Method::LocalDensity,
            margins: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// One context at the origin with three accepted responses clustered
    /// near (0, 0); pair responses are appended as rows 0.. of a test corpus.
    fn cluster_setup(test_responses: &[[f32; 2]]) -> (Corpus, Corpus) {
        let train = Corpus::new(
            EmbeddingMatrix::new(2, vec![0.0, 0.0]).unwrap(),
            EmbeddingMatrix::new(2, vec![0.1, 0.0, -0.1, 0.05, 0.0, -0.1]).unwrap(),
            vec![ContextRecord {
                id: "c".into(),
                embedding_row: 0,
                community: "x".into(),
                text: None,
            }],
            (0..3)
                .map(|i| ResponseRecord {
                    id: format!("r{i}"),
                    context_id: "c".into(),
                    embedding_row: i,
                    text: None,
                    acceptance_meta: None,
                })
                .collect(),
            false,
            "",
        )
        .unwrap();
        let test = Corpus::embeddings_only(
            EmbeddingMatrix::new(2, vec![0.0, 0.0]).unwrap(),
            EmbeddingMatrix::from_rows(2, test_responses).unwrap(),
        )
        .unwrap();
        (train, test)
    }

    #[test]
    fn margin_sign_rules() {
        assert_eq!(Margin::new(0.3).predicted, Prediction::A);
        assert_eq!(Margin::new(-1e-300).predicted, Prediction::B);
        assert_eq!(Margin::new(0.0).predicted, Prediction::Tie);
        assert_eq!(Margin::new(-0.0).predicted, Prediction::Tie);
    }

    #[test]
    fn dense_response_beats_distant_one() {
        let (train, test) = cluster_setup(&[[0.0, 0.0], [5.0, 5.0]]);
        let index = NeighborIndex::for_corpus(&train, IndexKind::VpTree).unwrap();
        let m = score_pair_local(&pair("p", Label::A), &test, &train, &index, 1, BandwidthRule::PerNeighborhood)
            .unwrap();
        assert!(m.value > 0.0);
        assert_eq!(m.predicted, Prediction::A);
    }

    #[test]
    fn identical_responses_tie() {
        let (train, test) = cluster_setup(&[[0.4, 0.4], [0.4, 0.4]]);
        let index = NeighborIndex::for_corpus(&train, IndexKind::VpTree).unwrap();
        let m = score_pair_local(&pair("p", Label::A), &test, &train, &index, 1, BandwidthRule::PerNeighborhood)
            .unwrap();
        assert_eq!(m.value, 0.0);
        assert_eq!(m.predicted, Prediction::Tie);
    }

    #[test]
    fn half_credit_arithmetic() {
        // three correct, one tie -> (3 + 0.5) / 4
        let pairs = vec![
            pair("a", Label::A),
            pair("b", Label::B),
            pair("c", Label::A),
            pair("d", Label::B),
        ];
        let scorer = table(&[("a", 1.0), ("b", -2.0), ("c", 0.1), ("d", 0.0)]);
        let r = evaluate(&pairs, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.accuracy, 0.875);
        assert_eq!(r.ties, 1);
        let strict = evaluate(&pairs, &scorer, EvalOptions { tie_mode: TieMode::Strict, ..Default::default() })
            .unwrap();
        assert_eq!(strict.accuracy, 0.75);
    }

    #[test]
    fn perfect_scorer_has_zero_width() {
        let pairs: Vec<_> = (0..40).map(|i| pair(&format!("p{i}"), if i % 3 == 0 { Label::A } else { Label::B })).collect();
        let scorer = MarginTable {
            method: Method::LocalDensity,
            margins: pairs
                .iter()
                .map(|p| (p.pair_id.clone(), if p.label == Label::A { 1.0 } else { -1.0 }))
                .collect(),
        };
        let r = evaluate(&pairs, &scorer, EvalOptions::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.half_width, 0.0);
    }

    #[test]
    fn empty_pairs_rejected() {
        assert!(matches!(
            evaluate(&[], &RandomScorer { seed: 1 }, EvalOptions::default()),
            Err(Error::EmptyPairSet)
        ));
    }

    #[test]
    fn random_baseline_single_pair_and_determinism() {
        let one = vec![pair("only", Label::A)];
        let r = baseline_random(&one, EvalOptions::default()).unwrap();
        assert!(r.accuracy == 0.0 || r.accuracy == 1.0);
        let pairs: Vec<_> = (0..300).map(|i| pair(&format!("p{i}"), Label::A)).collect();
        let opts = EvalOptions { seed: 5, ..Default::default() };
        assert_eq!(baseline_random(&pairs, opts).unwrap(), baseline_random(&pairs, opts).unwrap());
    }

    #[test]
    fn report_is_order_invariant() {
        let mut pairs: Vec<_> = (0..200).map(|i| pair(&format!("p{i}"), if i % 2 == 0 { Label::A } else { Label::B })).collect();
        let opts = EvalOptions { seed: 3, bootstrap_n: 300, ..Default::default() };
        let a = baseline_random(&pairs, opts).unwrap();
        pairs.reverse();
        assert_eq!(a, baseline_random(&pairs, opts).unwrap());
    }

    #[test]
    fn knn_votes() {
        let m = EmbeddingMatrix::new(1, (0..150).map(|i| i as f32).collect()).unwrap();
        let index = NeighborIndex::build(&m, IndexKind::VpTree).unwrap();
        let all_a = vec![(1, 0); 150];
        let margin = baseline_knn_majority(&index, &all_a, &[0.0], 150).unwrap();
        assert_eq!((margin.value, margin.predicted), (1.0, Prediction::A));
        let split: Vec<_> = (0..150).map(|i| if i % 2 == 0 { (1, 0) } else { (0, 1) }).collect();
        assert_eq!(baseline_knn_majority(&index, &split, &[0.0], 150).unwrap().predicted, Prediction::Tie);
        let none = vec![(0, 0); 150];
        assert!(matches!(
            baseline_knn_majority(&index, &none, &[0.0], 10),
            Err(Error::NoLabeledNeighbors)
        ));
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("knn".parse::<Method>().unwrap(), Method::KnnMajority);
        assert!("oracle".parse::<Method>().is_err());
    }

    #[test]
    fn ausc_by_hand() {
        assert_eq!(ausc(&[(0.0, 0.5), (1.0, 1.0)]).unwrap(), 0.75);
        assert_eq!(ausc(&[(10.0, 0.6), (20.0, 0.6), (40.0, 0.6)]).unwrap(), 1.0);
        assert_eq!(pairs_to_95(&[(10.0, 0.6), (20.0, 0.6)]).unwrap(), 10.0);
        assert_eq!(pairs_to_95(&[(1.0, 0.5), (2.0, 0.9), (3.0, 0.96), (4.0, 1.0)]).unwrap(), 3.0);
        assert_eq!(ausc(&[(5.0, 0.7)]).unwrap(), 1.0);
        assert!(ausc(&[(1.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(ausc(&[]).is_err());
    }

    fn ratio_pairs(ratios: &[f64]) -> Vec<PreferencePair> {
        ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| PreferencePair {
                score_ratio: Some(r),
                ..pair(&format!("p{i:03}"), Label::A)
            })
            .collect()
    }

    #[test]
    fn constant_accuracy_has_no_correlation() {
        let pairs = ratio_pairs(&(0..80).map(|i| 1.0 + i as f64).collect::<Vec<_>>());
        let scorer = table(&pairs.iter().map(|p| (p.pair_id.as_str(), 1.0)).collect::<Vec<_>>());
        let r = correlate_agreement(&pairs, &scorer, 8, 500, EvalOptions::default()).unwrap();
        assert_eq!(r.bins.len(), 8);
        assert!(r.bins.iter().all(|b| b.n == 10 && b.accuracy == 1.0));
        assert_eq!(r.spearman_rho, 0.0);
        assert_eq!(r.p_spearman, 1.0);
    }

    #[test]
    fn degenerate_agreement_inputs() {
        let pairs = ratio_pairs(&[2.0; 12]);
        let scorer = table(&pairs.iter().map(|p| (p.pair_id.as_str(), 1.0)).collect::<Vec<_>>());
        assert!(matches!(
            correlate_agreement(&pairs, &scorer, 4, 10, EvalOptions::default()),
            Err(Error::NoVariance)
        ));
        let mut missing = ratio_pairs(&[1.0, 2.0, 3.0, 4.0]);
        missing[2].score_ratio = None;
        assert!(matches!(
            correlate_agreement(&missing, &scorer, 3, 10, EvalOptions::default()),
            Err(Error::MissingScoreRatio(_))
        ));
        assert!(correlate_agreement(&ratio_pairs(&[1.0, 2.0]), &scorer, 2, 10, EvalOptions::default()).is_err());
    }

    #[test]
    fn validate_catches_dangling_rows() {
        let (_, test) = cluster_setup(&[[0.0, 0.0], [1.0, 1.0]]);
        let mut p = pair("p", Label::A);
        assert!(validate_pairs(&[p.clone()], &test).is_ok());
        p.response_b_row = 9;
        assert!(matches!(validate_pairs(&[p], &test), Err(Error::DanglingRef(_))));
        let dup = vec![pair("x", Label::A), pair("x", Label::B)];
        assert!(matches!(validate_pairs(&dup, &test), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn pairs_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.ndjson");
        let mut p = pair("p1", Label::B);
        p.score_ratio = Some(3.5);
        p.context_text = Some("why?".into());
        write_pairs(&path, &[p.clone()]).unwrap();
        assert_eq!(read_pairs(&path).unwrap(), vec![p]);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.contains("\"label\":\"B\""));
    }
}
