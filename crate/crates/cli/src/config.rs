//! Run configuration: a JSON file whose values command-line flags override.

use std::fs;
use std::path::{Path, PathBuf};

use acceptance::forge::PairMode;
use acceptance::TieMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    /// Median pairwise distance within each neighborhood.
    #[default]
    Local,
    /// One median over the global reference subset, shared by all queries.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Manifest (or directory holding `manifest.json`) of the reference corpus.
    pub train_corpus: Option<PathBuf>,
    /// Corpus the pair rows index; the train corpus when absent.
    pub test_corpus: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    /// Labeled pairs over the train corpus, used by the kNN baseline.
    pub train_pairs: Option<PathBuf>,
    pub pools: Option<PathBuf>,
    pub pool_corpus: Option<PathBuf>,
    pub k: usize,
    pub global_subset_size: usize,
    pub bootstrap_n: usize,
    pub bins: usize,
    pub permutations: usize,
    pub seed: u64,
    pub tie_mode: TieMode,
    /// Force unit-norm embeddings regardless of the manifest flag.
    pub normalization: bool,
    pub bandwidth: BandwidthChoice,
    pub min_gap: f64,
    pub threshold_percentile: f64,
    pub pair_mode: PairMode,
    pub methods: Vec<String>,
    pub k_values: Vec<usize>,
    pub train_sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_corpus: None,
            test_corpus: None,
            pairs: None,
            train_pairs: None,
            pools: None,
            pool_corpus: None,
            k: 150,
            global_subset_size: 1000,
            bootstrap_n: 1000,
            bins: 8,
            permutations: acceptance::eval::DEFAULT_PERMUTATIONS,
            seed: 0,
            tie_mode: TieMode::HalfCredit,
            normalization: false,
            bandwidth: BandwidthChoice::Local,
            min_gap: 0.0,
            threshold_percentile: acceptance::forge::DEFAULT_THRESHOLD_PERCENTILE,
            pair_mode: PairMode::TopBottom,
            methods: vec!["random".into(), "knn_majority".into(), "global_density".into(), "local_density".into()],
            k_values: vec![50, 100, 150, 250, 400],
            train_sizes: Vec::new(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.train_corpus,
            &mut cfg.test_corpus,
            &mut cfg.pairs,
            &mut cfg.train_pairs,
            &mut cfg.pools,
            &mut cfg.pool_corpus,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("k", self.k),
            ("global_subset_size", self.global_subset_size),
            ("bins", self.bins),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Usage(format!("{name} must be positive")));
            }
        }
        if !(self.min_gap >= 0.0 && self.min_gap.is_finite()) {
            return Err(CliError::Usage(format!("min_gap must be a non-negative number, got {}", self.min_gap)));
        }
        if !(0.0..=100.0).contains(&self.threshold_percentile) {
            return Err(CliError::Usage(format!(
                "threshold_percentile must lie in [0, 100], got {}",
                self.threshold_percentile
            )));
        }
        Ok(())
    }
}

/// Accepts either a manifest path or a directory containing `manifest.json`.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"k": 20, "kk": 3}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn defaults_fill_missing_keys_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"train_corpus": "train", "tie_mode": "strict"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.k, 150);
        assert_eq!(cfg.global_subset_size, 1000);
        assert_eq!(cfg.tie_mode, TieMode::Strict);
        assert_eq!(cfg.train_corpus.unwrap(), dir.path().join("train"));
    }

    #[test]
    fn zero_k_fails_check() {
        let cfg = RunConfig { k: 0, ..Default::default() };
        assert!(matches!(cfg.check(), Err(CliError::Usage(_))));
    }
}
