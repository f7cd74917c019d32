//! Config-driven experiments: every (dataset, strategy, repetition) run,
//! aggregation, significance tests and the result files.
//!
//! Seeds are derived from the master seed so any single run can be replayed:
//!
//! ```text
//! derive_seed(master, parts) = u64::from_le_bytes(sha256("alr" 0x1f master 0x1f part_1 0x1f ... part_n)[..8])
//! pool split     : derive_seed(master, [dataset, "pool", rep])
//! initial K_0    : derive_seed(master, [dataset, "init", rep])   (shared by BL, QBC, EMCM)
//! strategy stream: derive_seed(master, [dataset, strategy, rep])
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{
    budget_k, drowsiness_index, encode_and_normalize, load_csv, split_pool, synthetic_linear,
    ColumnSpecFile, Dataset, DatasetError, PoolSpec, SyntheticSpec,
};
use crate::harness::{
    aggregate, mean_curves, normalized_run_aucs, run_once, AucSummary, HarnessError, Measure,
    RunRecord, RunSpec,
};
use crate::model::ModelConfig;
use crate::samplers::{FirstPick, StrategyConfig, StrategyKind};
use crate::stats::{dunn_report, render_table, report_csv, StatReport, StatsError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LabelTransform {
    /// Response time in seconds to drowsiness index.
    Drowsiness { tau0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    /// CSV file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Column-spec JSON sidecar; defaults to `<path stem>.columns.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_transform: Option<LabelTransform>,
}

fn default_committee() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub kind: StrategyKind,
    #[serde(default = "default_committee")]
    pub committee_size: usize,
    #[serde(default)]
    pub first_pick: FirstPick,
}

impl StrategyEntry {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            committee_size: default_committee(),
            first_pick: FirstPick::Centroid,
        }
    }
}

/// Pool and budget parameters; the split seed is derived per repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolParams {
    pub pool_fraction: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub k_fraction: f64,
}

impl Default for PoolParams {
    fn default() -> Self {
        let d = PoolSpec::default();
        Self {
            pool_fraction: d.pool_fraction,
            k_min: d.k_min,
            k_max: d.k_max,
            k_fraction: d.k_fraction,
        }
    }
}

impl PoolParams {
    pub fn spec(&self, seed: u64) -> PoolSpec {
        PoolSpec {
            pool_fraction: self.pool_fraction,
            k_min: self.k_min,
            k_max: self.k_max,
            k_fraction: self.k_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsPooling {
    /// All datasets' BL-normalized AUCs pooled per strategy.
    #[default]
    Pooled,
    /// One test per dataset.
    PerDataset,
}

fn default_repetitions() -> usize {
    100
}
fn default_workers() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.05
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub stats_pooling: StatsPooling,
    /// Overrides K_0 (default: post-encoding feature count).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<usize>,
    /// Also write each normalized dataset to `datasets/<id>.csv`.
    #[serde(default)]
    pub dump_datasets: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub pool: PoolParams,
    pub datasets: Vec<DatasetEntry>,
    pub strategies: Vec<StrategyEntry>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Hash over everything that affects results; worker count and output
    /// location are excluded.
    pub fn result_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"alr");
    h.update([0x1f]);
    h.update(master.to_string().as_bytes());
    for p in parts {
        h.update([0x1f]);
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Lists every problem with the config at once.
pub fn validate_config(config: &ExperimentConfig) -> Vec<String> {
    let mut v = Vec::new();
    if config.strategies.is_empty() {
        v.push("strategies empty".to_string());
    } else if !config.strategies.iter().any(|s| s.kind == StrategyKind::Bl) {
        v.push("BL strategy is required for AUC normalization".to_string());
    }
    let mut seen = Vec::new();
    for s in &config.strategies {
        if seen.contains(&s.kind) {
            v.push(format!("strategy {} listed twice", s.kind));
        }
        seen.push(s.kind);
        if s.kind.uses_committee() && s.committee_size < 2 {
            v.push(format!(
                "strategy {}: committee_size {} < 2",
                s.kind, s.committee_size
            ));
        }
    }
    if config.datasets.is_empty() {
        v.push("datasets empty".to_string());
    }
    let mut ids = Vec::new();
    for d in &config.datasets {
        if d.id.is_empty() || d.id.contains(['/', '\\']) {
            v.push(format!(
                "dataset id '{}' must be a nonempty file-name-safe string",
                d.id
            ));
        }
        if ids.contains(&&d.id) {
            v.push(format!("dataset id '{}' listed twice", d.id));
        }
        ids.push(&d.id);
        match (&d.path, &d.synthetic) {
            (Some(_), Some(_)) => {
                v.push(format!("dataset '{}': both path and synthetic given", d.id))
            }
            (None, None) => v.push(format!("dataset '{}': needs path or synthetic", d.id)),
            (None, Some(s)) => {
                if s.n < 2 || s.d == 0 {
                    v.push(format!(
                        "dataset '{}': synthetic needs n >= 2 and d >= 1",
                        d.id
                    ));
                }
                if !(s.noise >= 0.0 && s.noise.is_finite()) {
                    v.push(format!("dataset '{}': synthetic noise must be >= 0", d.id));
                }
            }
            (Some(_), None) => {}
        }
        if let Some(LabelTransform::Drowsiness { tau0 }) = d.label_transform {
            if !tau0.is_finite() {
                v.push(format!("dataset '{}': tau0 must be finite", d.id));
            }
        }
    }
    if !(config.model.lambda > 0.0 && config.model.lambda.is_finite()) {
        v.push(format!("lambda {} must be positive", config.model.lambda));
    }
    if config.repetitions == 0 {
        v.push("repetitions must be at least 1".to_string());
    }
    if config.workers == 0 {
        v.push("workers must be at least 1".to_string());
    }
    if !(0.0..=1.0).contains(&config.alpha) {
        v.push(format!("alpha {} not in [0, 1]", config.alpha));
    }
    if config.k0 == Some(0) {
        v.push("k0 must be at least 1".to_string());
    }
    v.extend(config.pool.spec(0).violations());
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub id: String,
    pub data: Dataset,
    pub k0: usize,
    pub budget: usize,
}

pub fn load_dataset(
    entry: &DatasetEntry,
    config: &ExperimentConfig,
    base_dir: &Path,
) -> Result<LoadedDataset, DatasetError> {
    let mut data = match (&entry.path, &entry.synthetic) {
        (_, Some(spec)) => synthetic_linear(spec)?,
        (Some(path), None) => {
            let path = base_dir.join(path);
            let columns = match &entry.columns {
                Some(c) => base_dir.join(c),
                None => path.with_extension("columns.json"),
            };
            let spec = ColumnSpecFile::from_json_file(&columns)?;
            encode_and_normalize(&load_csv(&path, &spec)?)?
        }
        (None, None) => {
            return Err(DatasetError::ColumnSpec(format!(
                "dataset '{}' has no source",
                entry.id
            )))
        }
    };
    if let Some(LabelTransform::Drowsiness { tau0 }) = entry.label_transform {
        data.map_labels(|tau| drowsiness_index(tau, tau0));
    }
    let k0 = config.k0.unwrap_or(data.n_features());
    let budget = budget_k(data.n_samples(), &config.pool.spec(0)).max(k0);
    Ok(LoadedDataset {
        id: entry.id.clone(),
        data,
        k0,
        budget,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub dataset: String,
    pub strategy: Option<StrategyKind>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub rmse: Option<StatReport>,
    pub cc: Option<StatReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSection {
    pub pooling: StatsPooling,
    pub alpha: f64,
    pub pooled: Option<DatasetStats>,
    pub per_dataset: Vec<DatasetStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub repetitions: usize,
    pub model: ModelConfig,
    pub auc: AucSummary,
    pub stats: StatsSection,
    pub cc_excluded_runs: usize,
    pub incomplete_datasets: Vec<String>,
    pub missing_cells: Vec<MissingCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    pub datasets: Vec<LoadedDataset>,
}

impl ExperimentOutcome {
    /// 0 on success, 2 when some (dataset, strategy) cells failed.
    pub fn exit_code(&self) -> i32 {
        if self.summary.missing_cells.is_empty() {
            0
        } else {
            2
        }
    }
}

struct Task<'a> {
    data: &'a LoadedDataset,
    entry: &'a StrategyEntry,
    repetition: usize,
}

fn run_task(config: &ExperimentConfig, task: &Task<'_>) -> Result<RunRecord, String> {
    let ds = task.data;
    let rep = task.repetition.to_string();
    let master = config.master_seed;
    let pool_seed = derive_seed(master, &[&ds.id, "pool", &rep]);
    let split = split_pool(ds.data.n_samples(), &config.pool.spec(pool_seed), ds.k0 + 1)
        .map_err(|e| e.to_string())?;
    if split.pool.len() < ds.budget {
        return Err(format!(
            "pool of {} samples is smaller than the budget K = {}",
            split.pool.len(),
            ds.budget
        ));
    }
    let kind = task.entry.kind;
    let strategy = StrategyConfig {
        kind,
        committee_size: task.entry.committee_size,
        seed: derive_seed(master, &[&ds.id, kind.name(), &rep]),
        first_pick: task.entry.first_pick,
    };
    let spec = RunSpec {
        dataset: ds.id.clone(),
        repetition: task.repetition,
        strategy,
        model: config.model,
        k0: ds.k0,
        budget: ds.budget,
        init_seed: derive_seed(master, &[&ds.id, "init", &rep]),
    };
    run_once(&ds.data, &split.pool, &spec).map_err(|e| e.to_string())
}

fn stats_for(
    records: &[RunRecord],
    strategies: &[StrategyKind],
    datasets: Option<&str>,
) -> Result<DatasetStats> {
    let labels: Vec<String> = strategies.iter().map(|k| k.name().to_string()).collect();
    let mut out = DatasetStats {
        dataset: datasets.unwrap_or("pooled").to_string(),
        rmse: None,
        cc: None,
    };
    if strategies.len() < 2 {
        return Ok(out);
    }
    for m in Measure::BOTH {
        let per_dataset = normalized_run_aucs(records, m);
        let groups: Vec<Vec<f64>> = strategies
            .iter()
            .map(|k| {
                per_dataset
                    .iter()
                    .filter(|(id, _)| datasets.is_none_or(|d| d == id.as_str()))
                    .flat_map(|(_, by_kind)| by_kind.get(k).cloned().unwrap_or_default())
                    .collect()
            })
            .collect();
        if groups.iter().any(Vec::is_empty) {
            continue;
        }
        let report = dunn_report(m.name(), &labels, &groups)?;
        match m {
            Measure::Rmse => out.rmse = Some(report),
            Measure::Cc => out.cc = Some(report),
        }
    }
    Ok(out)
}

/// Runs every configured cell and aggregates. `base_dir` resolves relative
/// dataset paths. Writes nothing; see [`write_artifacts`].
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentOutcome> {
    let violations = validate_config(config);
    if !violations.is_empty() {
        return Err(ExperimentError::Invalid(violations));
    }

    let mut missing = Vec::new();
    let mut loaded = Vec::new();
    for entry in &config.datasets {
        match load_dataset(entry, config, base_dir) {
            Ok(d) => loaded.push(d),
            Err(e) => missing.push(MissingCell {
                dataset: entry.id.clone(),
                strategy: None,
                error: e.to_string(),
            }),
        }
    }

    let tasks: Vec<Task<'_>> = loaded
        .iter()
        .flat_map(|data| {
            config.strategies.iter().flat_map(move |entry| {
                (0..config.repetitions).map(move |repetition| Task {
                    data,
                    entry,
                    repetition,
                })
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("thread pool");
    let results: Vec<Result<RunRecord, String>> =
        pool.install(|| tasks.par_iter().map(|t| run_task(config, t)).collect());

    // collected in task order, so content does not depend on scheduling
    let mut failed: BTreeMap<(String, StrategyKind), String> = BTreeMap::new();
    let mut records = Vec::new();
    for (task, result) in tasks.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(e) => {
                failed
                    .entry((task.data.id.clone(), task.entry.kind))
                    .or_insert_with(|| format!("repetition {}: {e}", task.repetition));
            }
        }
    }
    for ((dataset, kind), error) in &failed {
        missing.push(MissingCell {
            dataset: dataset.clone(),
            strategy: Some(*kind),
            error: error.clone(),
        });
    }
    let incomplete: Vec<String> = config
        .datasets
        .iter()
        .map(|d| d.id.clone())
        .filter(|id| missing.iter().any(|m| &m.dataset == id))
        .collect();
    records.retain(|r| !incomplete.contains(&r.dataset));

    let auc = if records.is_empty() {
        AucSummary {
            strategies: Vec::new(),
            datasets: Vec::new(),
            average_rank_rmse: crate::harness::RankRow {
                mean: Vec::new(),
                order: Vec::new(),
            },
            average_rank_cc: crate::harness::RankRow {
                mean: Vec::new(),
                order: Vec::new(),
            },
        }
    } else {
        aggregate(&records)?
    };

    let mut stats = StatsSection {
        pooling: config.stats_pooling,
        alpha: config.alpha,
        pooled: None,
        per_dataset: Vec::new(),
    };
    match config.stats_pooling {
        StatsPooling::Pooled => {
            stats.pooled = Some(stats_for(&records, &auc.strategies, None)?);
        }
        StatsPooling::PerDataset => {
            for d in &auc.datasets {
                stats
                    .per_dataset
                    .push(stats_for(&records, &auc.strategies, Some(&d.dataset))?);
            }
        }
    }

    let cc_excluded_runs = records.iter().filter(|r| !r.cc_defined()).count();
    let summary = Summary {
        version: VERSION.to_string(),
        config_hash: config.result_hash(),
        master_seed: config.master_seed,
        repetitions: config.repetitions,
        model: config.model,
        auc,
        stats,
        cc_excluded_runs,
        incomplete_datasets: incomplete,
        missing_cells: missing,
    };
    Ok(ExperimentOutcome {
        records,
        summary,
        datasets: loaded,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes all result files under `dir` and returns their relative paths.
pub fn write_artifacts(
    outcome: &ExperimentOutcome,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();

    let dataset_pos = |id: &str| config.datasets.iter().position(|d| d.id == id);
    let strategy_pos = |k: StrategyKind| config.strategies.iter().position(|s| s.kind == k);
    let mut ordered: Vec<&RunRecord> = outcome.records.iter().collect();
    ordered.sort_by_key(|r| {
        (
            dataset_pos(&r.dataset),
            strategy_pos(r.strategy),
            r.repetition,
        )
    });

    let mut runs = String::from("dataset,strategy,seed,k,rmse,cc\n");
    for r in &ordered {
        for p in &r.points {
            runs.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.dataset,
                r.strategy,
                r.seed,
                p.k,
                p.rmse,
                fmt_opt(p.cc)
            ));
        }
    }
    files.push(("runs.csv".into(), runs.into_bytes()));

    for ((dataset, kind), curve) in mean_curves(&outcome.records) {
        let mut csv = String::from("k,mean_rmse,mean_cc\n");
        for p in curve {
            csv.push_str(&format!("{},{},{}\n", p.k, p.mean_rmse, fmt_opt(p.mean_cc)));
        }
        files.push((
            Path::new("curves").join(format!("{dataset}_{kind}.csv")),
            csv.into_bytes(),
        ));
    }

    let mut json = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    json.push('\n');
    files.push(("summary.json".into(), json.into_bytes()));

    let alpha = config.alpha;
    let mut stat_files = |suffix: &str, stats: &DatasetStats| {
        for report in [&stats.rmse, &stats.cc].into_iter().flatten() {
            let stem = format!("dunn_{}{suffix}", report.measure);
            files.push((
                format!("{stem}.csv").into(),
                report_csv(report).into_bytes(),
            ));
            files.push((
                format!("{stem}.txt").into(),
                render_table(report, alpha).into_bytes(),
            ));
        }
    };
    if let Some(pooled) = &outcome.summary.stats.pooled {
        stat_files("", pooled);
    }
    for per in &outcome.summary.stats.per_dataset {
        stat_files(&format!("_{}", per.dataset), per);
    }

    if config.dump_datasets {
        for d in &outcome.datasets {
            let mut buf = Vec::new();
            d.data
                .write_csv(&mut buf)
                .map_err(|e| ExperimentError::Write {
                    path: format!("datasets/{}.csv", d.id).into(),
                    source: std::io::Error::other(e.to_string()),
                })?;
            files.push((Path::new("datasets").join(format!("{}.csv", d.id)), buf));
        }
    }

    let hash = config.result_hash();
    let mut manifest = String::new();
    for (path, bytes) in &files {
        manifest.push_str(&format!(
            "{}\tsha256={}\tconfig={hash}\tversion={VERSION}\n",
            path.display(),
            hex_digest(bytes)
        ));
    }
    files.push(("manifest.txt".into(), manifest.into_bytes()));

    let mut written = Vec::new();
    for (rel, bytes) in files {
        let full = dir.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|source| ExperimentError::Write {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&full, bytes).map_err(|source| ExperimentError::Write {
            path: full.clone(),
            source,
        })?;
        written.push(rel);
    }
    Ok(written)
}
