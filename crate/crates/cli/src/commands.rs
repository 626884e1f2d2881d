use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use acceptance::eval::{
    self, baseline_random, correlate_agreement, data_efficiency, evaluate, k_sweep, read_pairs,
    validate_pairs, EvalOptions, GlobalDensityScorer, KnnMajorityScorer, LocalDensityScorer,
    Method, PairScorer, PreferencePair, REPORT_SCHEMA_VERSION,
};
use acceptance::forge::{self, ForgeContext, ForgePolicy, ManifoldDiagnostics, PairFlag};
use acceptance::synthetic::{SyntheticBenchmark, SyntheticSpec};
use acceptance::{
    load_corpus, write_corpus, BandwidthRule, Corpus, GlobalReference, IndexKind, NeighborIndex,
    TieMode,
};
use serde::Serialize;

use crate::config::{manifest_path, BandwidthChoice, RunConfig};
use crate::{Cli, CliError, Command, DataArgs, PoolArgs, ScoringArgs};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Validate { data, pools } => {
            apply_data(&mut cfg, data);
            apply_pools(&mut cfg, pools);
            cfg.check()?;
            validate(&cfg, cli.out.as_deref())
        }
        Command::Eval { data, scoring, methods } => {
            apply_data(&mut cfg, data);
            apply_scoring(&mut cfg, scoring);
            if let Some(m) = methods {
                cfg.methods = m.clone();
            }
            cfg.check()?;
            eval_cmd(&cfg, cli.out.as_deref())
        }
        Command::Bins { data, scoring, method, bins, permutations, csv } => {
            apply_data(&mut cfg, data);
            apply_scoring(&mut cfg, scoring);
            set(&mut cfg.bins, bins);
            set(&mut cfg.permutations, permutations);
            cfg.check()?;
            let method = parse_method(method.as_deref().unwrap_or("local_density"))?;
            bins_cmd(&cfg, method, cli.out.as_deref(), csv.as_deref())
        }
        Command::Sweep { data, scoring, k_values, csv } => {
            apply_data(&mut cfg, data);
            apply_scoring(&mut cfg, scoring);
            if let Some(k) = k_values {
                cfg.k_values = k.clone();
            }
            cfg.check()?;
            sweep_cmd(&cfg, cli.out.as_deref(), csv.as_deref())
        }
        Command::Efficiency { data, scoring, sizes, csv } => {
            apply_data(&mut cfg, data);
            apply_scoring(&mut cfg, scoring);
            if let Some(s) = sizes {
                cfg.train_sizes = s.clone();
            }
            cfg.check()?;
            efficiency_cmd(&cfg, cli.out.as_deref(), csv.as_deref())
        }
        Command::Forge { data, pools, scoring, min_gap, threshold_percentile, mode, diagnostics } => {
            apply_data(&mut cfg, data);
            apply_pools(&mut cfg, pools);
            apply_scoring(&mut cfg, scoring);
            set(&mut cfg.min_gap, min_gap);
            set(&mut cfg.threshold_percentile, threshold_percentile);
            set(&mut cfg.pair_mode, mode);
            cfg.check()?;
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| CliError::Usage("forge needs --out for the pseudo-pair file".into()))?;
            forge_cmd(&cfg, out, diagnostics.as_deref())
        }
        Command::Synth { dir, clusters, contexts_per_cluster, dim, test_pairs, agreement_pairs, pools } => {
            let mut spec = SyntheticSpec { seed: cfg.seed, ..Default::default() };
            set(&mut spec.clusters, clusters);
            set(&mut spec.contexts_per_cluster, contexts_per_cluster);
            set(&mut spec.dim, dim);
            set(&mut spec.test_pairs, test_pairs);
            synth_cmd(spec, dir, agreement_pairs.unwrap_or(2000), pools.unwrap_or(500))
        }
    }
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    for (slot, v) in [
        (&mut cfg.train_corpus, &d.train),
        (&mut cfg.test_corpus, &d.test),
        (&mut cfg.pairs, &d.pairs),
        (&mut cfg.train_pairs, &d.train_pairs),
    ] {
        if v.is_some() {
            *slot = v.clone();
        }
    }
}

fn apply_pools(cfg: &mut RunConfig, p: &PoolArgs) {
    if p.pools.is_some() {
        cfg.pools = p.pools.clone();
    }
    if p.pool_corpus.is_some() {
        cfg.pool_corpus = p.pool_corpus.clone();
    }
}

fn apply_scoring(cfg: &mut RunConfig, s: &ScoringArgs) {
    set(&mut cfg.k, &s.k);
    set(&mut cfg.bandwidth, &s.bandwidth);
    set(&mut cfg.global_subset_size, &s.global_subset_size);
    set(&mut cfg.bootstrap_n, &s.bootstrap_n);
    if s.strict {
        cfg.tie_mode = TieMode::Strict;
    }
    if s.normalize {
        cfg.normalization = true;
    }
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse().map_err(|e: acceptance::Error| CliError::Usage(e.to_string()))
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("no {what} given (config key or flag)")))
}

/// Corpora in a shared working space: when the config asks for it or the
/// reference corpus is stored normalized, every corpus is normalized.
struct Workspace {
    train: Corpus,
    test: Option<Corpus>,
    normalized: bool,
}

impl Workspace {
    fn load(cfg: &RunConfig) -> Result<Workspace, CliError> {
        let train = load_corpus(&manifest_path(require(&cfg.train_corpus, "train corpus")?))?;
        let normalized = cfg.normalization || train.is_normalized();
        let test = cfg
            .test_corpus
            .as_deref()
            .map(|p| load_corpus(&manifest_path(p)).and_then(|c| c.with_normalization(normalized)))
            .transpose()?;
        Ok(Workspace {
            train: train.with_normalization(normalized)?,
            test,
            normalized,
        })
    }

    fn pair_corpus(&self) -> &Corpus {
        self.test.as_ref().unwrap_or(&self.train)
    }

    fn pairs(&self, cfg: &RunConfig) -> Result<Vec<PreferencePair>, CliError> {
        let pairs = read_pairs(require(&cfg.pairs, "pairs file")?)?;
        validate_pairs(&pairs, self.pair_corpus())?;
        Ok(pairs)
    }

    fn bandwidth(&self, cfg: &RunConfig) -> Result<BandwidthRule, CliError> {
        Ok(match cfg.bandwidth {
            BandwidthChoice::Local => BandwidthRule::PerNeighborhood,
            BandwidthChoice::Global => {
                BandwidthRule::Fixed(GlobalReference::sample(&self.train, cfg.global_subset_size, cfg.seed)?.sigma)
            }
        })
    }
}

fn options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        bootstrap_n: cfg.bootstrap_n,
        seed: cfg.seed,
        tie_mode: cfg.tie_mode,
    }
}

/// Parameters echoed into every report. Paths and thread counts are left
/// out so that reports compare equal across machines and worker counts.
#[derive(Serialize)]
struct Echo {
    k: usize,
    global_subset_size: usize,
    bootstrap_n: usize,
    seed: u64,
    tie_mode: TieMode,
    bandwidth: BandwidthChoice,
    normalized: bool,
}

fn echo(cfg: &RunConfig, normalized: bool) -> Echo {
    Echo {
        k: cfg.k,
        global_subset_size: cfg.global_subset_size,
        bootstrap_n: cfg.bootstrap_n,
        seed: cfg.seed,
        tie_mode: cfg.tie_mode,
        bandwidth: cfg.bandwidth,
        normalized,
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: Echo,
    #[serde(flatten)]
    body: T,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Internal(format!("stdout: {e}"))),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(acceptance::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_error(path, io),
        other => CliError::Internal(format!("csv {}: {other:?}", path.display())),
    }
}

#[derive(Serialize)]
struct CorpusSummary {
    contexts: usize,
    responses: usize,
    context_records: usize,
    response_records: usize,
    dim: usize,
    normalized: bool,
    encoder_name: String,
}

fn summarize(c: &Corpus) -> CorpusSummary {
    CorpusSummary {
        contexts: c.contexts().len(),
        responses: c.responses().len(),
        context_records: c.context_records().len(),
        response_records: c.response_records().len(),
        dim: c.dim(),
        normalized: c.is_normalized(),
        encoder_name: c.encoder_name().to_string(),
    }
}

fn validate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let mut summary: BTreeMap<&str, serde_json::Value> = BTreeMap::new();
    let load = |p: &Path| load_corpus(&manifest_path(p));

    let train = cfg.train_corpus.as_deref().map(load).transpose()?;
    let test = cfg.test_corpus.as_deref().map(load).transpose()?;
    let pool_corpus = cfg.pool_corpus.as_deref().map(load).transpose()?;
    if train.is_none() && test.is_none() && pool_corpus.is_none() {
        return Err(CliError::Usage("nothing to validate: give --train, --test or --pool-corpus".into()));
    }
    if let Some(c) = &train {
        summary.insert("train", to_value(&summarize(c)));
    }
    if let Some(c) = &test {
        summary.insert("test", to_value(&summarize(c)));
    }
    if let (Some(a), Some(b)) = (&train, &test) {
        if a.dim() != b.dim() {
            return Err(acceptance::Error::DimMismatch { expected: a.dim(), found: b.dim() }.into());
        }
    }
    if let Some(path) = &cfg.pairs {
        let corpus = test.as_ref().or(train.as_ref()).ok_or_else(|| {
            CliError::Usage("pairs need a corpus to resolve against".into())
        })?;
        let pairs = read_pairs(path)?;
        validate_pairs(&pairs, corpus)?;
        summary.insert("pairs", pairs.len().into());
        let with_ratio = pairs.iter().filter(|p| p.score_ratio.is_some()).count();
        summary.insert("pairs_with_score_ratio", with_ratio.into());
    }
    if let Some(path) = &cfg.train_pairs {
        let corpus = train
            .as_ref()
            .ok_or_else(|| CliError::Usage("train pairs need the train corpus".into()))?;
        let pairs = read_pairs(path)?;
        validate_pairs(&pairs, corpus)?;
        summary.insert("train_pairs", pairs.len().into());
    }
    if let Some(c) = &pool_corpus {
        summary.insert("pool_corpus", to_value(&summarize(c)));
    }
    if let Some(path) = &cfg.pools {
        let corpus = pool_corpus
            .as_ref()
            .ok_or_else(|| CliError::Usage("pools need --pool-corpus".into()))?;
        let pools = forge::read_pools(path)?;
        for p in &pools {
            forge::validate_pool(p, corpus)?;
        }
        summary.insert("pools", pools.len().into());
        summary.insert("candidates", pools.iter().map(|p| p.candidates.len()).sum::<usize>().into());
    }
    emit(
        &serde_json::json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "command": "validate",
            "summary": summary,
        }),
        out,
    )
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("summaries serialize")
}

fn eval_cmd(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let mut methods = cfg
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    methods.sort();
    methods.dedup();

    let ws = Workspace::load(cfg)?;
    let pairs = ws.pairs(cfg)?;
    let opts = options(cfg);
    let rule = ws.bandwidth(cfg)?;
    let index = NeighborIndex::for_corpus(&ws.train, IndexKind::VpTree)?;
    let train_pairs = match (&cfg.train_pairs, methods.contains(&Method::KnnMajority)) {
        (Some(p), true) => {
            let tp = read_pairs(p)?;
            validate_pairs(&tp, &ws.train)?;
            Some(tp)
        }
        (None, true) => {
            return Err(CliError::Usage("knn_majority needs train pairs (--train-pairs)".into()));
        }
        _ => None,
    };

    let mut results = Vec::with_capacity(methods.len());
    for m in methods {
        let report = match m {
            Method::Random => baseline_random(&pairs, opts)?,
            Method::KnnMajority => {
                let tp = train_pairs.as_deref().expect("loaded above");
                let scorer = KnnMajorityScorer::new(ws.pair_corpus(), &ws.train, tp, cfg.k)?;
                evaluate(&pairs, &scorer, opts)?
            }
            Method::GlobalDensity => {
                let scorer = GlobalDensityScorer::new(ws.pair_corpus(), &ws.train, cfg.global_subset_size, cfg.seed)?;
                evaluate(&pairs, &scorer, opts)?
            }
            Method::LocalDensity => {
                let scorer = LocalDensityScorer {
                    pair_corpus: ws.pair_corpus(),
                    train: &ws.train,
                    index: &index,
                    k: cfg.k,
                    bandwidth: rule,
                };
                evaluate(&pairs, &scorer, opts)?
            }
        };
        results.push(report);
    }

    #[derive(Serialize)]
    struct Body {
        n_pairs: usize,
        results: Vec<eval::AccuracyReport>,
    }
    emit(
        &Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "eval",
            config: echo(cfg, ws.normalized),
            body: Body { n_pairs: pairs.len(), results },
        },
        out,
    )
}

/// Scorer for `bins`; margins are computed once and shared by every scope.
fn margin_table(
    method: Method,
    ws: &Workspace,
    cfg: &RunConfig,
    pairs: &[PreferencePair],
) -> Result<eval::MarginTable, CliError> {
    let rule = ws.bandwidth(cfg)?;
    let index = NeighborIndex::for_corpus(&ws.train, IndexKind::VpTree)?;
    let train_pairs;
    let scorer: Box<dyn PairScorer + '_> = match method {
        Method::Random => Box::new(eval::RandomScorer { seed: cfg.seed }),
        Method::KnnMajority => {
            train_pairs = read_pairs(require(&cfg.train_pairs, "train pairs")?)?;
            validate_pairs(&train_pairs, &ws.train)?;
            Box::new(KnnMajorityScorer::new(ws.pair_corpus(), &ws.train, &train_pairs, cfg.k)?)
        }
        Method::GlobalDensity => Box::new(GlobalDensityScorer::new(
            ws.pair_corpus(),
            &ws.train,
            cfg.global_subset_size,
            cfg.seed,
        )?),
        Method::LocalDensity => Box::new(LocalDensityScorer {
            pair_corpus: ws.pair_corpus(),
            train: &ws.train,
            index: &index,
            k: cfg.k,
            bandwidth: rule,
        }),
    };
    let margins = eval::score_all(pairs, scorer.as_ref())?;
    Ok(eval::MarginTable {
        method,
        margins: pairs
            .iter()
            .zip(margins)
            .map(|(p, m)| (p.pair_id.clone(), m.value))
            .collect::<HashMap<_, _>>(),
    })
}

fn bins_cmd(cfg: &RunConfig, method: Method, out: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let ws = Workspace::load(cfg)?;
    let pairs = ws.pairs(cfg)?;
    let table = margin_table(method, &ws, cfg, &pairs)?;
    let opts = options(cfg);

    let pooled = correlate_agreement(&pairs, &table, cfg.bins, cfg.permutations, opts)?;
    let mut by_community: BTreeMap<&str, Vec<PreferencePair>> = BTreeMap::new();
    for p in &pairs {
        by_community.entry(p.community.as_str()).or_default().push(p.clone());
    }

    #[derive(Serialize)]
    struct Scope {
        community: String,
        n_pairs: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        report: Option<eval::CorrelationReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        skipped: Option<String>,
    }
    let communities: Vec<Scope> = by_community
        .into_iter()
        .map(|(name, members)| {
            let (report, skipped) = match correlate_agreement(&members, &table, cfg.bins, cfg.permutations, opts) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Scope {
                community: name.to_string(),
                n_pairs: members.len(),
                report,
                skipped,
            }
        })
        .collect();

    if let Some(path) = csv {
        #[derive(Serialize)]
        struct Row<'a> {
            scope: &'a str,
            bin: usize,
            median_score_ratio: f64,
            accuracy: f64,
            n: usize,
        }
        let mut rows = Vec::new();
        let scopes = std::iter::once(("pooled", Some(&pooled)))
            .chain(communities.iter().map(|s| (s.community.as_str(), s.report.as_ref())));
        for (scope, report) in scopes {
            for (bin, b) in report.into_iter().flat_map(|r| r.bins.iter().enumerate()) {
                rows.push(Row {
                    scope,
                    bin,
                    median_score_ratio: b.median_score_ratio,
                    accuracy: b.accuracy,
                    n: b.n,
                });
            }
        }
        write_csv(path, &rows)?;
    }

    #[derive(Serialize)]
    struct Body {
        bins: usize,
        pooled: eval::CorrelationReport,
        communities: Vec<Scope>,
    }
    emit(
        &Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "bins",
            config: echo(cfg, ws.normalized),
            body: Body { bins: cfg.bins, pooled, communities },
        },
        out,
    )
}

fn sweep_cmd(cfg: &RunConfig, out: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    if cfg.k_values.is_empty() || cfg.k_values.windows(2).any(|w| w[0] >= w[1]) || cfg.k_values[0] == 0 {
        return Err(CliError::Usage("k values must be positive and strictly ascending".into()));
    }
    let ws = Workspace::load(cfg)?;
    let pairs = ws.pairs(cfg)?;
    let index = NeighborIndex::for_corpus(&ws.train, IndexKind::VpTree)?;
    let report = k_sweep(
        &pairs,
        ws.pair_corpus(),
        &ws.train,
        &index,
        &cfg.k_values,
        ws.bandwidth(cfg)?,
        cfg.tie_mode,
    )?;
    if let Some(path) = csv {
        #[derive(Serialize)]
        struct Row<'a> {
            community: &'a str,
            k: usize,
            accuracy: f64,
            delta: f64,
        }
        let rows: Vec<Row> = report
            .communities
            .iter()
            .flat_map(|c| {
                report.k_values.iter().enumerate().map(move |(i, &k)| Row {
                    community: &c.community,
                    k,
                    accuracy: c.accuracies[i],
                    delta: c.deltas[i],
                })
            })
            .collect();
        write_csv(path, &rows)?;
    }
    emit(
        &Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "sweep",
            config: echo(cfg, ws.normalized),
            body: report,
        },
        out,
    )
}

fn efficiency_cmd(cfg: &RunConfig, out: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let ws = Workspace::load(cfg)?;
    let pairs = ws.pairs(cfg)?;
    let sizes = if cfg.train_sizes.is_empty() {
        let n = ws.train.context_records().len();
        let mut s: Vec<usize> = [16, 8, 4, 2, 1].iter().map(|d| n / d).filter(|&v| v > 0).collect();
        s.dedup();
        s
    } else {
        cfg.train_sizes.clone()
    };
    let report = data_efficiency(
        &pairs,
        ws.pair_corpus(),
        &ws.train,
        &sizes,
        cfg.k,
        ws.bandwidth(cfg)?,
        options(cfg),
    )?;
    if let Some(path) = csv {
        write_csv(path, &report.curve)?;
    }
    emit(
        &Report {
            schema_version: REPORT_SCHEMA_VERSION,
            command: "efficiency",
            config: echo(cfg, ws.normalized),
            body: report,
        },
        out,
    )
}

fn forge_cmd(cfg: &RunConfig, out: &Path, diagnostics: Option<&Path>) -> Result<(), CliError> {
    let ws = Workspace::load(cfg)?;
    let pool_corpus = load_corpus(&manifest_path(require(&cfg.pool_corpus, "pool corpus")?))?
        .with_normalization(ws.normalized)?;
    let pools = forge::read_pools(require(&cfg.pools, "pools file")?)?;
    let index = NeighborIndex::for_corpus(&ws.train, IndexKind::VpTree)?;
    let ctx = ForgeContext {
        pool_corpus: &pool_corpus,
        train: &ws.train,
        index: &index,
        k: cfg.k,
        bandwidth: ws.bandwidth(cfg)?,
    };
    let policy = ForgePolicy {
        min_gap: cfg.min_gap,
        mode: cfg.pair_mode,
        threshold_percentile: cfg.threshold_percentile,
    };
    let forged = forge::forge_pools(&pools, &ctx, &policy)?;
    let pairs: Vec<forge::PseudoPair> = forged.iter().flat_map(|f| f.pairs.iter().cloned()).collect();
    forge::export_pairs(&pairs, out)?;

    if let Some(path) = diagnostics {
        #[derive(Serialize)]
        struct PoolDiagnostics<'a> {
            context_id: &'a str,
            #[serde(flatten)]
            diagnostics: &'a ManifoldDiagnostics,
        }
        let rows: Vec<PoolDiagnostics> = pools
            .iter()
            .zip(&forged)
            .map(|(p, f)| PoolDiagnostics {
                context_id: &p.context_id,
                diagnostics: &f.diagnostics,
            })
            .collect();
        emit(
            &serde_json::json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "command": "forge",
                "pools": rows,
            }),
            Some(path),
        )?;
    }

    let count = |flag| pairs.iter().filter(|p| p.flags.contains(&flag)).count();
    #[derive(Serialize)]
    struct Body {
        pools: usize,
        pairs: usize,
        uninformative: usize,
        small_gap: usize,
        min_gap: f64,
        threshold_percentile: f64,
    }
    let body = Body {
        pools: pools.len(),
        pairs: pairs.len(),
        uninformative: count(PairFlag::Uninformative),
        small_gap: count(PairFlag::SmallGap),
        min_gap: cfg.min_gap,
        threshold_percentile: cfg.threshold_percentile,
    };
    eprintln!(
        "forged {} pairs from {} pools ({} uninformative, {} small gap) -> {}",
        body.pairs,
        body.pools,
        body.uninformative,
        body.small_gap,
        out.display()
    );
    Ok(())
}

fn synth_cmd(spec: SyntheticSpec, dir: &Path, agreement_pairs: usize, pools: usize) -> Result<(), CliError> {
    let bench = SyntheticBenchmark::generate(spec)?;
    bench.write(dir)?;

    let (agree_corpus, agree) = bench.agreement_set(agreement_pairs, 20.0, 0.5, 4.0, spec.seed)?;
    write_corpus(&agree_corpus, &dir.join("agreement"))?;
    eval::write_pairs(&dir.join("agreement").join("pairs.ndjson"), &agree)?;

    let in_cluster = pools / 5;
    let synthetic_pools = bench.pools(pools, in_cluster, in_cluster, 6, spec.seed)?;
    write_corpus(&synthetic_pools.corpus, &dir.join("pool_corpus"))?;
    forge::write_pools(&dir.join("pools.ndjson"), &synthetic_pools.pools)?;

    let cfg = serde_json::json!({
        "train_corpus": "train",
        "test_corpus": "test",
        "pairs": "pairs.ndjson",
        "train_pairs": "train_pairs.ndjson",
        "pools": "pools.ndjson",
        "pool_corpus": "pool_corpus",
        "seed": spec.seed,
    });
    emit(&cfg, Some(&dir.join("config.json")))?;
    eprintln!("wrote synthetic benchmark to {}", dir.display());
    Ok(())
}
