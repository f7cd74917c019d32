//! Tabular ingestion: CSV loading, one-hot encoding, z-score normalization,
//! pool/holdout splitting and the labeling budget.
//!
//! Normalization is computed once over the full table, before any pool is
//! drawn. Columns that are constant over the full table carry no information
//! after centering and are dropped (and reported in [`Dataset::dropped`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid column spec: {0}")]
    ColumnSpec(String),
    #[error("data row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("data row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("data row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("no usable feature columns remain after dropping constant columns")]
    NoFeatures,
    #[error("pool of {pool} samples is smaller than the {needed} required (K_0 + 1)")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("invalid pool spec: {0}")]
    PoolSpec(String),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Sidecar description of a CSV file. Columns not named here are numeric
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpecFile {
    pub label: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
}

impl ColumnSpecFile {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_reader(file)
            .map_err(|e| DatasetError::ColumnSpec(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Parsed, typed table. `columns` holds only feature columns, in file order;
/// the label is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub label_name: String,
    pub labels: Vec<f64>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Builds an all-numeric table from a feature matrix.
    pub fn from_numeric(
        names: &[String],
        features: &Array2<f64>,
        label_name: &str,
        labels: &[f64],
    ) -> Self {
        let columns = names
            .iter()
            .map(|n| Column {
                name: n.clone(),
                kind: ColumnKind::Numeric,
            })
            .collect();
        let rows = features
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| Cell::Num(v)).collect())
            .collect();
        Self {
            columns,
            rows,
            label_name: label_name.to_string(),
            labels: labels.to_vec(),
        }
    }
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "?" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a comma-delimited file with a header row.
pub fn load_csv(path: &Path, spec: &ColumnSpecFile) -> Result<RawTable> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, spec)
}

pub fn read_csv<R: std::io::Read>(reader: R, spec: &ColumnSpecFile) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let position = |name: &str| header.iter().position(|h| h == name);
    let label_pos = position(&spec.label).ok_or_else(|| {
        DatasetError::ColumnSpec(format!("label column '{}' not in header", spec.label))
    })?;
    if spec.categorical.contains(&spec.label) {
        return Err(DatasetError::ColumnSpec(format!(
            "label column '{}' must be numeric",
            spec.label
        )));
    }
    for name in spec.categorical.iter().chain(&spec.ignore) {
        if position(name).is_none() {
            return Err(DatasetError::ColumnSpec(format!(
                "column '{name}' not in header"
            )));
        }
    }

    // (header position, column)
    let mut features: Vec<(usize, Column)> = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if i == label_pos || spec.ignore.contains(name) {
            continue;
        }
        let kind = if spec.categorical.contains(name) {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        };
        features.push((
            i,
            Column {
                name: name.clone(),
                kind,
            },
        ));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DatasetError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let parse = |pos: usize, column: &str| -> Result<f64> {
            let field = &record[pos];
            if is_missing(field) {
                return Err(DatasetError::MissingValue {
                    row,
                    column: column.to_string(),
                });
            }
            field.parse::<f64>().map_err(|_| DatasetError::NonNumeric {
                row,
                column: column.to_string(),
                value: field.to_string(),
            })
        };
        labels.push(parse(label_pos, &spec.label)?);
        let mut cells = Vec::with_capacity(features.len());
        for (pos, col) in &features {
            let cell = match col.kind {
                ColumnKind::Numeric => Cell::Num(parse(*pos, &col.name)?),
                ColumnKind::Categorical => {
                    let field = &record[*pos];
                    if is_missing(field) {
                        return Err(DatasetError::MissingValue {
                            row,
                            column: col.name.clone(),
                        });
                    }
                    Cell::Cat(field.to_string())
                }
            };
            cells.push(cell);
        }
        rows.push(cells);
    }

    Ok(RawTable {
        columns: features.into_iter().map(|(_, c)| c).collect(),
        rows,
        label_name: spec.label.clone(),
        labels,
    })
}

/// Normalized design matrix plus labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    #[serde(skip)]
    pub features: Array2<f64>,
    #[serde(skip)]
    pub labels: Array1<f64>,
    pub feature_names: Vec<String>,
    /// categorical source column -> level -> feature column index
    pub encoding_map: BTreeMap<String, BTreeMap<String, usize>>,
    /// Encoded columns removed because they were constant over the full table.
    pub dropped: Vec<String>,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn map_labels(&mut self, f: impl Fn(f64) -> f64) {
        self.labels.mapv_inplace(f);
    }

    /// Writes the normalized table (features then label) as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push("label".to_string());
        w.write_record(&header)?;
        for (row, y) in self.features.rows().into_iter().zip(self.labels.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| DatasetError::Io {
            path: PathBuf::from("<dataset dump>"),
            source,
        })?;
        Ok(())
    }
}

/// One-hot expands categorical columns (levels in sorted order) and z-scores
/// every resulting column with the sample standard deviation.
pub fn encode_and_normalize(table: &RawTable) -> Result<Dataset> {
    let n = table.n_rows();
    if n < 2 {
        return Err(DatasetError::TooFewRows {
            needed: 2,
            found: n,
        });
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut levels_of: Vec<Option<(String, String)>> = Vec::new();
    for (j, col) in table.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                names.push(col.name.clone());
                columns.push(
                    table
                        .rows
                        .iter()
                        .map(|r| match &r[j] {
                            Cell::Num(v) => *v,
                            Cell::Cat(_) => unreachable!("numeric column holds a category"),
                        })
                        .collect(),
                );
                levels_of.push(None);
            }
            ColumnKind::Categorical => {
                let level = |r: &Vec<Cell>| match &r[j] {
                    Cell::Cat(s) => s.clone(),
                    Cell::Num(v) => v.to_string(),
                };
                let levels: BTreeSet<String> = table.rows.iter().map(level).collect();
                for lv in levels {
                    names.push(format!("{}={}", col.name, lv));
                    columns.push(
                        table
                            .rows
                            .iter()
                            .map(|r| if level(r) == lv { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    levels_of.push(Some((col.name.clone(), lv)));
                }
            }
        }
    }

    let mut kept_names = Vec::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    let mut encoding_map: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for ((name, mut values), level) in names.into_iter().zip(columns).zip(levels_of) {
        if !zscore_in_place(&mut values) {
            dropped.push(name);
            continue;
        }
        if let Some((source, lv)) = level {
            encoding_map
                .entry(source)
                .or_default()
                .insert(lv, kept.len());
        }
        kept_names.push(name);
        kept.push(values);
    }
    if kept.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let d = kept.len();
    let features = Array2::from_shape_fn((n, d), |(i, j)| kept[j][i]);
    Ok(Dataset {
        features,
        labels: Array1::from(table.labels.clone()),
        feature_names: kept_names,
        encoding_map,
        dropped,
    })
}

/// Returns false (leaving values untouched) when the column is constant.
fn zscore_in_place(values: &mut [f64]) -> bool {
    let n = values.len() as f64;
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return false;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSpec {
    pub pool_fraction: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub k_fraction: f64,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            pool_fraction: 0.8,
            k_min: 20,
            k_max: 60,
            k_fraction: 0.2,
            seed: 0,
        }
    }
}

impl PoolSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.pool_fraction > 0.0 && self.pool_fraction <= 1.0) {
            v.push(format!(
                "pool_fraction {} not in (0, 1]",
                self.pool_fraction
            ));
        }
        if self.k_min > self.k_max {
            v.push(format!("k_min {} > k_max {}", self.k_min, self.k_max));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction.is_finite()) {
            v.push(format!("k_fraction {} must be positive", self.k_fraction));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSplit {
    /// Dataset row indices, ascending.
    pub pool: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Draws `floor(pool_fraction * N)` rows uniformly without replacement.
/// `min_pool` is K_0 + 1.
pub fn split_pool(n_total: usize, spec: &PoolSpec, min_pool: usize) -> Result<PoolSplit> {
    if let Some(msg) = spec.violations().into_iter().next() {
        return Err(DatasetError::PoolSpec(msg));
    }
    let size = ((spec.pool_fraction * n_total as f64).floor() as usize).min(n_total);
    if size < min_pool {
        return Err(DatasetError::PoolTooSmall {
            pool: size,
            needed: min_pool,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool = index::sample(&mut rng, n_total, size).into_vec();
    pool.sort_unstable();
    let mut in_pool = vec![false; n_total];
    for &i in &pool {
        in_pool[i] = true;
    }
    let holdout = (0..n_total).filter(|&i| !in_pool[i]).collect();
    Ok(PoolSplit { pool, holdout })
}

/// K = clamp(round(k_fraction * n_total), k_min, k_max), computed from the
/// full dataset size.
pub fn budget_k(n_total: usize, spec: &PoolSpec) -> usize {
    let raw = (spec.k_fraction * n_total as f64 + 0.5).floor() as usize;
    raw.clamp(spec.k_min, spec.k_max)
}

/// Maps a response time to a drowsiness index in [0, 1]:
/// `max(0, (1 - e^-(tau - tau0)) / (1 + e^-(tau - tau0)))`.
pub fn drowsiness_index(tau: f64, tau0: f64) -> f64 {
    // the logistic ratio equals tanh(u / 2), which stays finite for large |u|
    ((tau - tau0) / 2.0).tanh().max(0.0)
}

/// Parameters of the seeded synthetic linear dataset used for tests and CI.
/// This generator is test plumbing, not one of the benchmark datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

/// y = w.x + 3 + noise, x ~ N(0, I), w ~ N(0, I), then features normalized.
pub fn synthetic_linear(spec: &SyntheticSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w: Vec<f64> = (0..spec.d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let x = Array2::from_shape_simple_fn((spec.n, spec.d), || StandardNormal.sample(&mut rng));
    let y: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|row| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 3.0 + spec.noise * eps
        })
        .collect();
    let names: Vec<String> = (0..spec.d).map(|j| format!("x{j}")).collect();
    encode_and_normalize(&RawTable::from_numeric(&names, &x, "y", &y))
}
