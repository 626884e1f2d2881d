//! Clustered synthetic corpora with known ground truth.
//!
//! Contexts and accepted responses of cluster `c` are drawn from
//! `N(mu_c, noise^2 I)`, with centroids `mu_c ~ N(0, centroid_scale^2 I)`.
//! A test pair's preferred response comes from the same distribution as the
//! accepted responses of its cluster; the dispreferred response is the
//! preferred one moved `offset * noise` along a random direction.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{Label, PreferencePair};
use crate::forge::{Candidate, CandidatePool, CandidateSource};
use crate::seed;
use crate::store::{write_corpus, ContextRecord, Corpus, EmbeddingMatrix, ResponseRecord};

const STREAM: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub clusters: usize,
    pub dim: usize,
    pub contexts_per_cluster: usize,
    pub centroid_scale: f64,
    pub noise: f64,
    /// Displacement of dispreferred responses, in units of `noise`.
    pub offset: f64,
    pub test_pairs: usize,
    pub communities: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clusters: 20,
            dim: 16,
            contexts_per_cluster: 420,
            centroid_scale: 4.0,
            noise: 1.0,
            offset: 3.0,
            test_pairs: 500,
            communities: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub spec: SyntheticSpec,
    pub centroids: Vec<Vec<f64>>,
    pub train: Corpus,
    pub test: Corpus,
    pub pairs: Vec<PreferencePair>,
    /// One pair per training context with a coin-flip label, for the kNN
    /// baseline. Rows index `train`.
    pub train_pairs: Vec<PreferencePair>,
}

/// What a synthetic pool was built to contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    /// A few in-cluster candidates among candidates from other clusters.
    Mixed,
    /// Every candidate in-cluster.
    InCluster,
    /// Every candidate moved `10 * noise` off the cluster.
    Displaced,
}

#[derive(Debug, Clone)]
pub struct SyntheticPools {
    pub corpus: Corpus,
    pub pools: Vec<CandidatePool>,
    pub kinds: Vec<PoolKind>,
    /// Per pool, whether each candidate was drawn from the pool's cluster.
    pub in_cluster: Vec<Vec<bool>>,
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Sampler {
    fn normal(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    fn around(&mut self, center: &[f64], scale: f64) -> Vec<f64> {
        center.iter().zip(self.normal()).map(|(c, z)| c + scale * z).collect()
    }

    fn unit(&mut self) -> Vec<f64> {
        loop {
            let v = self.normal();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    fn moved(&mut self, x: &[f64], distance: f64) -> Vec<f64> {
        x.iter().zip(self.unit()).map(|(a, u)| a + distance * u).collect()
    }
}

fn to_f32(rows: &[Vec<f64>], dim: usize) -> Result<EmbeddingMatrix> {
    let data = rows.iter().flatten().map(|&v| v as f32).collect();
    EmbeddingMatrix::new(dim, data)
}

fn community(spec: &SyntheticSpec, cluster: usize) -> String {
    format!("community-{}", cluster % spec.communities.max(1))
}

impl SyntheticBenchmark {
    pub fn generate(spec: SyntheticSpec) -> Result<Self> {
        if spec.clusters == 0 || spec.dim == 0 || spec.contexts_per_cluster < 2 {
            return Err(Error::InvalidArgument(
                "need at least one cluster, one dimension and two contexts per cluster".into(),
            ));
        }
        let mut s = Sampler {
            rng: seed::substream(spec.seed, STREAM),
            dim: spec.dim,
        };
        let centroids: Vec<Vec<f64>> = (0..spec.clusters)
            .map(|_| s.around(&vec![0.0; spec.dim], spec.centroid_scale))
            .collect();

        let n_train = spec.clusters * spec.contexts_per_cluster;
        let (mut ctx_rows, mut resp_rows) = (Vec::with_capacity(n_train), Vec::with_capacity(n_train));
        let (mut ctx_recs, mut resp_recs) = (Vec::with_capacity(n_train), Vec::with_capacity(n_train));
        for i in 0..n_train {
            let c = i % spec.clusters;
            ctx_rows.push(s.around(&centroids[c], spec.noise));
            resp_rows.push(s.around(&centroids[c], spec.noise));
            ctx_recs.push(ContextRecord {
                id: format!("ctx-{i:06}"),
                embedding_row: i,
                community: community(&spec, c),
                text: None,
            });
            resp_recs.push(ResponseRecord {
                id: format!("resp-{i:06}"),
                context_id: format!("ctx-{i:06}"),
                embedding_row: i,
                text: None,
                acceptance_meta: None,
            });
        }
        let train = Corpus::new(
            to_f32(&ctx_rows, spec.dim)?,
            to_f32(&resp_rows, spec.dim)?,
            ctx_recs,
            resp_recs,
            false,
            "synthetic",
        )?;

        // another response of the same cluster sits `clusters` rows away
        let train_pairs = (0..n_train)
            .map(|i| {
                let other = (i + spec.clusters) % n_train;
                PreferencePair {
                    pair_id: format!("train-{i:06}"),
                    context_row: i,
                    response_a_row: i,
                    response_b_row: other,
                    label: if s.rng.random::<bool>() { Label::A } else { Label::B },
                    score_ratio: None,
                    community: community(&spec, i % spec.clusters),
                    context_text: None,
                    response_a_text: None,
                    response_b_text: None,
                }
            })
            .collect();

        let offsets = vec![spec.offset; spec.test_pairs];
        let (test, pairs) = test_split(&mut s, &spec, &centroids, &offsets, None, "pair")?;
        Ok(SyntheticBenchmark {
            spec,
            centroids,
            train,
            test,
            pairs,
            train_pairs,
        })
    }

    /// Pairs whose score_ratio, log-uniform on `[1, max_ratio]`, controls the
    /// dispreferred offset: from `min_offset` at ratio 1 up to `max_offset`.
    /// Higher agreement means a wider geometric gap and an easier pair.
    pub fn agreement_set(
        &self,
        n: usize,
        max_ratio: f64,
        min_offset: f64,
        max_offset: f64,
        seed: u64,
    ) -> Result<(Corpus, Vec<PreferencePair>)> {
        if max_ratio.is_nan() || max_ratio <= 1.0 {
            return Err(Error::InvalidArgument("max_ratio must exceed 1".into()));
        }
        let mut s = Sampler {
            rng: seed::substream(seed, "synthetic-agreement"),
            dim: self.spec.dim,
        };
        let ratios: Vec<f64> = (0..n).map(|_| max_ratio.powf(s.rng.random::<f64>())).collect();
        let offsets: Vec<f64> = ratios
            .iter()
            .map(|r| min_offset + (max_offset - min_offset) * r.ln() / max_ratio.ln())
            .collect();
        test_split(&mut s, &self.spec, &self.centroids, &offsets, Some(&ratios), "agree")
    }

    /// Candidate pools against this benchmark's clusters. Mixed pools hold
    /// one to three in-cluster candidates among `candidates` total; the rest
    /// come from other clusters.
    pub fn pools(
        &self,
        mixed: usize,
        in_cluster: usize,
        displaced: usize,
        candidates: usize,
        seed: u64,
    ) -> Result<SyntheticPools> {
        if candidates < 4 || self.spec.clusters < 2 {
            return Err(Error::InvalidArgument(
                "pools need at least 4 candidates and 2 clusters".into(),
            ));
        }
        let spec = &self.spec;
        let mut s = Sampler {
            rng: seed::substream(seed, "synthetic-pools"),
            dim: spec.dim,
        };
        let kinds: Vec<PoolKind> = std::iter::repeat_n(PoolKind::Mixed, mixed)
            .chain(std::iter::repeat_n(PoolKind::InCluster, in_cluster))
            .chain(std::iter::repeat_n(PoolKind::Displaced, displaced))
            .collect();

        let (mut ctx_rows, mut cand_rows) = (Vec::new(), Vec::new());
        let mut pools = Vec::with_capacity(kinds.len());
        let mut truth = Vec::with_capacity(kinds.len());
        for (p, &kind) in kinds.iter().enumerate() {
            let c = p % spec.clusters;
            ctx_rows.push(s.around(&self.centroids[c], spec.noise));
            let n_in = match kind {
                PoolKind::Mixed => s.rng.random_range(1..=3),
                _ => candidates,
            };
            let mut members = Vec::with_capacity(candidates);
            let mut flags = Vec::with_capacity(candidates);
            for j in 0..candidates {
                let inside = j < n_in;
                let x = match kind {
                    PoolKind::Displaced => {
                        let x = s.around(&self.centroids[c], spec.noise);
                        s.moved(&x, 10.0 * spec.noise)
                    }
                    _ if inside => s.around(&self.centroids[c], spec.noise),
                    _ => {
                        let other = (c + s.rng.random_range(1..spec.clusters)) % spec.clusters;
                        s.around(&self.centroids[other], spec.noise)
                    }
                };
                members.push(Candidate {
                    candidate_id: format!("pool{p:04}-cand{j:02}"),
                    row: cand_rows.len(),
                    text: None,
                    source: CandidateSource::ExternallyGenerated,
                });
                flags.push(inside && kind != PoolKind::Displaced);
                cand_rows.push(x);
            }
            // shuffle so position carries no signal
            for j in (1..members.len()).rev() {
                let o = s.rng.random_range(0..=j);
                members.swap(j, o);
                flags.swap(j, o);
            }
            pools.push(CandidatePool {
                context_id: format!("pool-{p:04}"),
                context_row: p,
                context_text: None,
                candidates: members,
            });
            truth.push(flags);
        }
        Ok(SyntheticPools {
            corpus: Corpus::embeddings_only(to_f32(&ctx_rows, spec.dim)?, to_f32(&cand_rows, spec.dim)?)?,
            pools,
            kinds,
            in_cluster: truth,
        })
    }

    /// Writes `train/`, `test/`, `pairs.ndjson` and `train_pairs.ndjson`
    /// under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_corpus(&self.train, &dir.join("train"))?;
        write_corpus(&self.test, &dir.join("test"))?;
        crate::eval::write_pairs(&dir.join("pairs.ndjson"), &self.pairs)?;
        crate::eval::write_pairs(&dir.join("train_pairs.ndjson"), &self.train_pairs)?;
        Ok(())
    }
}

/// Test contexts and pairs: pair `i` belongs to cluster `i % clusters`, its
/// context is row `i`, and its responses rows `2i` and `2i + 1`.
fn test_split(
    s: &mut Sampler,
    spec: &SyntheticSpec,
    centroids: &[Vec<f64>],
    offsets: &[f64],
    ratios: Option<&[f64]>,
    prefix: &str,
) -> Result<(Corpus, Vec<PreferencePair>)> {
    let n = offsets.len();
    let (mut ctx_rows, mut resp_rows) = (Vec::with_capacity(n), Vec::with_capacity(2 * n));
    let (mut ctx_recs, mut resp_recs) = (Vec::with_capacity(n), Vec::with_capacity(2 * n));
    let mut pairs = Vec::with_capacity(n);
    for (i, &offset) in offsets.iter().enumerate() {
        let c = i % spec.clusters;
        let ctx_id = format!("{prefix}-ctx-{i:06}");
        ctx_rows.push(s.around(&centroids[c], spec.noise));
        let preferred = s.around(&centroids[c], spec.noise);
        let dispreferred = s.moved(&preferred, offset * spec.noise);
        let label = if s.rng.random::<bool>() { Label::A } else { Label::B };
        let (a, b) = match label {
            Label::A => (preferred, dispreferred),
            Label::B => (dispreferred, preferred),
        };
        resp_rows.push(a);
        resp_rows.push(b);
        ctx_recs.push(ContextRecord {
            id: ctx_id.clone(),
            embedding_row: i,
            community: community(spec, c),
            text: None,
        });
        for (side, row) in [("a", 2 * i), ("b", 2 * i + 1)] {
            resp_recs.push(ResponseRecord {
                id: format!("{prefix}-{i:06}-{side}"),
                context_id: ctx_id.clone(),
                embedding_row: row,
                text: None,
                acceptance_meta: None,
            });
        }
        pairs.push(PreferencePair {
            pair_id: format!("{prefix}-{i:06}"),
            context_row: i,
            response_a_row: 2 * i,
            response_b_row: 2 * i + 1,
            label,
            score_ratio: ratios.map(|r| r[i]),
            community: community(spec, c),
            context_text: None,
            response_a_text: None,
            response_b_text: None,
        });
    }
    let corpus = Corpus::new(
        to_f32(&ctx_rows, spec.dim)?,
        to_f32(&resp_rows, spec.dim)?,
        ctx_recs,
        resp_recs,
        false,
        "synthetic",
    )?;
    Ok((corpus, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::validate_pairs;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            clusters: 4,
            dim: 3,
            contexts_per_cluster: 10,
            test_pairs: 12,
            ..Default::default()
        }
    }

    #[test]
    fn shapes_and_references() {
        let b = SyntheticBenchmark::generate(small()).unwrap();
        assert_eq!(b.train.contexts().len(), 40);
        assert_eq!(b.test.responses().len(), 24);
        validate_pairs(&b.pairs, &b.test).unwrap();
        validate_pairs(&b.train_pairs, &b.train).unwrap();
        // train pair responses share a cluster
        for p in &b.train_pairs {
            assert_eq!(p.response_a_row % 4, p.response_b_row % 4);
        }
    }

    #[test]
    fn dispreferred_sits_at_the_offset() {
        let b = SyntheticBenchmark::generate(small()).unwrap();
        for p in &b.pairs {
            let d = crate::index::euclidean(
                b.test.responses().row(p.response_a_row),
                b.test.responses().row(p.response_b_row),
            );
            assert!((d - 3.0).abs() < 1e-5, "{d}");
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = SyntheticBenchmark::generate(small()).unwrap();
        let b = SyntheticBenchmark::generate(small()).unwrap();
        assert_eq!(a.train.raw_responses(), b.train.raw_responses());
        assert_eq!(a.pairs, b.pairs);
        let c = SyntheticBenchmark::generate(SyntheticSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train.raw_responses(), c.train.raw_responses());
    }

    #[test]
    fn pools_track_membership() {
        let b = SyntheticBenchmark::generate(small()).unwrap();
        let p = b.pools(5, 2, 2, 6, 3).unwrap();
        assert_eq!(p.pools.len(), 9);
        for (pool, (kind, flags)) in p.pools.iter().zip(p.kinds.iter().zip(&p.in_cluster)) {
            crate::forge::validate_pool(pool, &p.corpus).unwrap();
            let n_in = flags.iter().filter(|&&f| f).count();
            match kind {
                PoolKind::Mixed => assert!((1..=3).contains(&n_in)),
                PoolKind::InCluster => assert_eq!(n_in, 6),
                PoolKind::Displaced => assert_eq!(n_in, 0),
            }
        }
    }

    #[test]
    fn agreement_ratios_span_the_range() {
        let b = SyntheticBenchmark::generate(small()).unwrap();
        let (corpus, pairs) = b.agreement_set(200, 20.0, 0.5, 4.0, 1).unwrap();
        validate_pairs(&pairs, &corpus).unwrap();
        let r: Vec<f64> = pairs.iter().map(|p| p.score_ratio.unwrap()).collect();
        assert!(r.iter().all(|&v| (1.0..=20.0).contains(&v)));
        assert!(r.iter().any(|&v| v < 2.0) && r.iter().any(|&v| v > 10.0));
    }
}
