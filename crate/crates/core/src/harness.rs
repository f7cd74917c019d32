//! Evaluation protocol: grow the labeled set from K_0 to K one sample at a
//! time, score the whole pool after every refit, and reduce the learning
//! curves to BL-normalized areas and rank tables.

use std::collections::BTreeMap;

use ndarray::{Array1, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::model::{ridge_fit_rows, ModelConfig, ModelError};
use crate::samplers::{
    select_first_gsx, select_first_medoid, FirstPick, PoolState, Sampler, SamplerError,
    StrategyConfig, StrategyKind,
};

#[derive(Debug, Error, PartialEq)]
pub enum HarnessError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("invalid run: {0}")]
    InvalidRun(String),
    #[error("{strategy} at k = {k}: {source}")]
    Strategy {
        strategy: StrategyKind,
        k: usize,
        #[source]
        source: SamplerError,
    },
    #[error("model fit at k = {k}: {source}")]
    Model {
        k: usize,
        #[source]
        source: ModelError,
    },
    #[error("dataset '{dataset}' has no {strategy} runs")]
    MissingCohort {
        dataset: String,
        strategy: StrategyKind,
    },
    #[error("dataset '{0}': runs disagree on the k grid")]
    InconsistentGrid(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub fn rmse(y_true: &[f64], y_est: &[f64]) -> Result<f64> {
    if y_true.len() != y_est.len() {
        return Err(HarnessError::LengthMismatch(y_true.len(), y_est.len()));
    }
    if y_true.is_empty() {
        return Err(HarnessError::TooShort { need: 1, got: 0 });
    }
    let sse: f64 = y_true
        .iter()
        .zip(y_est)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn cc(y_true: &[f64], y_est: &[f64]) -> Result<Option<f64>> {
    if y_true.len() != y_est.len() {
        return Err(HarnessError::LengthMismatch(y_true.len(), y_est.len()));
    }
    if y_true.len() < 2 {
        return Err(HarnessError::TooShort {
            need: 2,
            got: y_true.len(),
        });
    }
    let n = y_true.len() as f64;
    let ma = y_true.iter().sum::<f64>() / n;
    let mb = y_est.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in y_true.iter().zip(y_est) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub rmse: f64,
    /// `None` when the correlation is undefined.
    pub cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub strategy: StrategyKind,
    pub repetition: usize,
    pub seed: u64,
    /// One entry per k = K_0..=K.
    pub points: Vec<CurvePoint>,
    /// Pool positions in selection order, initial K_0 included.
    pub trace: Vec<usize>,
}

impl RunRecord {
    pub fn k0(&self) -> usize {
        self.points.first().map_or(0, |p| p.k)
    }

    pub fn budget(&self) -> usize {
        self.points.last().map_or(0, |p| p.k)
    }

    /// A single-point curve has no area.
    pub fn is_degenerate(&self) -> bool {
        self.points.len() < 2
    }

    pub fn cc_defined(&self) -> bool {
        self.points.iter().all(|p| p.cc.is_some())
    }
}

/// Everything a single run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub dataset: String,
    pub repetition: usize,
    pub strategy: StrategyConfig,
    pub model: ModelConfig,
    pub k0: usize,
    pub budget: usize,
    /// Seed of the random K_0 initialization shared by BL, QBC and EMCM.
    pub init_seed: u64,
}

/// Runs one strategy on one pool. After every fit, the pool is scored with
/// true labels for labeled samples and model estimates for the rest.
pub fn run_once(ds: &Dataset, pool: &[usize], spec: &RunSpec) -> Result<RunRecord> {
    let n = pool.len();
    let (k0, budget) = (spec.k0, spec.budget);
    if k0 == 0 || k0 > budget || budget > n {
        return Err(HarnessError::InvalidRun(format!(
            "need 1 <= K_0 ({k0}) <= K ({budget}) <= pool size ({n})"
        )));
    }
    if let Some(&bad) = pool.iter().find(|&&i| i >= ds.n_samples()) {
        return Err(HarnessError::InvalidRun(format!(
            "pool index {bad} outside dataset of {} rows",
            ds.n_samples()
        )));
    }
    let features = ds.features.select(Axis(0), pool);
    let truth: Array1<f64> = pool.iter().map(|&i| ds.labels[i]).collect();
    let mut state = PoolState::new(features, k0);
    let kind = spec.strategy.kind;
    let strategy_err = |k: usize| {
        move |source| HarnessError::Strategy {
            strategy: kind,
            k,
            source,
        }
    };

    if kind.random_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        for i in index::sample(&mut rng, n, k0).into_vec() {
            state.label(i, truth[i]).map_err(strategy_err(0))?;
        }
    } else {
        let first = match spec.strategy.first_pick {
            FirstPick::Centroid => select_first_gsx(state.features()),
            FirstPick::Medoid => select_first_medoid(state.features()),
        };
        state.label(first, truth[first]).map_err(strategy_err(0))?;
        while state.labeled().len() < k0 {
            let k = state.labeled().len();
            let next = crate::samplers::next_gsx(&state).map_err(strategy_err(k))?;
            state.label(next, truth[next]).map_err(strategy_err(k))?;
        }
    }

    let mut sampler = Sampler::new(spec.strategy.clone(), spec.model);
    let mut points = Vec::with_capacity(budget - k0 + 1);
    let truth_slice = truth.as_slice().expect("contiguous labels");
    loop {
        let k = state.labeled().len();
        let model = ridge_fit_rows(
            state.features(),
            state.label_by_index(),
            state.labeled(),
            &spec.model,
        )
        .map_err(|source| HarnessError::Model { k, source })?;
        let estimates: Vec<f64> = (0..n)
            .map(|i| {
                if state.is_labeled(i) {
                    truth[i]
                } else {
                    model.predict_one(state.row(i))
                }
            })
            .collect();
        points.push(CurvePoint {
            k,
            rmse: rmse(truth_slice, &estimates)?,
            cc: if n >= 2 {
                cc(truth_slice, &estimates)?
            } else {
                None
            },
        });
        if k == budget {
            break;
        }
        let next = sampler
            .select(&state, Some(&model))
            .map_err(strategy_err(k))?;
        state.label(next, truth[next]).map_err(strategy_err(k))?;
    }

    Ok(RunRecord {
        dataset: spec.dataset.clone(),
        strategy: kind,
        repetition: spec.repetition,
        seed: spec.strategy.seed,
        points,
        trace: state.labeled().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Rmse,
    Cc,
}

impl Measure {
    pub const BOTH: [Measure; 2] = [Measure::Rmse, Measure::Cc];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Rmse => "rmse",
            Measure::Cc => "cc",
        }
    }

    /// RMSE: smaller is better. CC: larger is better.
    pub fn smaller_is_better(self) -> bool {
        matches!(self, Measure::Rmse)
    }
}

/// Trapezoidal area under `(k, value)` pairs. A single point has area 0.
pub fn trapezoid(points: &[(usize, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Area under a run's curve; `None` for CC when any iteration is undefined.
pub fn auc(record: &RunRecord, measure: Measure) -> Option<f64> {
    let pts: Option<Vec<(usize, f64)>> = record
        .points
        .iter()
        .map(|p| match measure {
            Measure::Rmse => Some((p.k, p.rmse)),
            Measure::Cc => p.cc.map(|c| (p.k, c)),
        })
        .collect();
    pts.map(|p| trapezoid(&p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub k: usize,
    pub mean_rmse: f64,
    /// Mean over runs whose CC is defined at every iteration.
    pub mean_cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureCell {
    /// Area under the mean curve.
    pub auc: Option<f64>,
    /// Mean of per-run areas.
    pub auc_per_run: Option<f64>,
    /// `auc / auc(BL)`; this drives the rank table.
    pub normalized: Option<f64>,
    pub normalized_per_run: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: StrategyKind,
    pub runs: usize,
    /// Runs left out of CC aggregation because CC was undefined somewhere.
    pub cc_excluded: usize,
    pub rmse: MeasureCell,
    pub cc: MeasureCell,
}

impl CellSummary {
    pub fn measure(&self, m: Measure) -> &MeasureCell {
        match m {
            Measure::Rmse => &self.rmse,
            Measure::Cc => &self.cc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub k0: usize,
    pub budget: usize,
    pub degenerate: bool,
    pub cells: Vec<CellSummary>,
}

impl DatasetSummary {
    pub fn cell(&self, kind: StrategyKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.strategy == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    /// Mean rank per strategy across datasets, aligned with `strategies`.
    pub mean: Vec<f64>,
    /// Ordinal rank of the mean ranks (the table's "Average" row).
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub strategies: Vec<StrategyKind>,
    pub datasets: Vec<DatasetSummary>,
    pub average_rank_rmse: RankRow,
    pub average_rank_cc: RankRow,
}

impl AucSummary {
    pub fn dataset(&self, id: &str) -> Option<&DatasetSummary> {
        self.datasets.iter().find(|d| d.dataset == id)
    }

    pub fn average_rank(&self, m: Measure) -> &RankRow {
        match m {
            Measure::Rmse => &self.average_rank_rmse,
            Measure::Cc => &self.average_rank_cc,
        }
    }
}

type Cohorts<'a> = BTreeMap<String, BTreeMap<StrategyKind, Vec<&'a RunRecord>>>;

/// Groups records by dataset and strategy, each cohort sorted by repetition,
/// so results do not depend on the order records arrive in.
fn cohorts(records: &[RunRecord]) -> Cohorts<'_> {
    let mut out: Cohorts<'_> = BTreeMap::new();
    for r in records {
        out.entry(r.dataset.clone())
            .or_default()
            .entry(r.strategy)
            .or_default()
            .push(r);
    }
    for by_kind in out.values_mut() {
        for runs in by_kind.values_mut() {
            runs.sort_by_key(|r| (r.repetition, r.seed));
        }
    }
    out
}

/// Mean learning curve per (dataset, strategy).
pub fn mean_curves(records: &[RunRecord]) -> BTreeMap<(String, StrategyKind), Vec<MeanPoint>> {
    let mut out = BTreeMap::new();
    for (ds, by_kind) in cohorts(records) {
        for (kind, runs) in by_kind {
            out.insert((ds.clone(), kind), mean_curve(&runs));
        }
    }
    out
}

fn mean_curve(runs: &[&RunRecord]) -> Vec<MeanPoint> {
    let len = runs.iter().map(|r| r.points.len()).min().unwrap_or(0);
    let cc_runs: Vec<&&RunRecord> = runs.iter().filter(|r| r.cc_defined()).collect();
    (0..len)
        .map(|i| {
            let mean_rmse = runs.iter().map(|r| r.points[i].rmse).sum::<f64>() / runs.len() as f64;
            let mean_cc = (!cc_runs.is_empty()).then(|| {
                cc_runs
                    .iter()
                    .map(|r| r.points[i].cc.expect("filtered"))
                    .sum::<f64>()
                    / cc_runs.len() as f64
            });
            MeanPoint {
                k: runs[0].points[i].k,
                mean_rmse,
                mean_cc,
            }
        })
        .collect()
}

fn mean_curve_auc(curve: &[MeanPoint], m: Measure) -> Option<f64> {
    let pts: Option<Vec<(usize, f64)>> = curve
        .iter()
        .map(|p| match m {
            Measure::Rmse => Some((p.k, p.mean_rmse)),
            Measure::Cc => p.mean_cc.map(|c| (p.k, c)),
        })
        .collect();
    pts.map(|p| trapezoid(&p))
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    }
}

/// Ranks 1..=n; ties keep the order of `values` (strategy order).
fn rank(values: &[Option<f64>], smaller_is_better: bool) -> Vec<usize> {
    let key = |v: Option<f64>| -> f64 {
        match v {
            Some(x) if smaller_is_better => x,
            Some(x) => -x,
            None => f64::INFINITY,
        }
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Per dataset: mean AUC per strategy, normalized by BL, and rank tables.
pub fn aggregate(records: &[RunRecord]) -> Result<AucSummary> {
    let groups = cohorts(records);
    let mut strategies: Vec<StrategyKind> = groups
        .values()
        .flat_map(|by_kind| by_kind.keys().copied())
        .collect();
    strategies.sort();
    strategies.dedup();

    let mut datasets = Vec::new();
    for (ds, by_kind) in &groups {
        for &required in std::iter::once(&StrategyKind::Bl).chain(&strategies) {
            if !by_kind.contains_key(&required) {
                return Err(HarnessError::MissingCohort {
                    dataset: ds.clone(),
                    strategy: required,
                });
            }
        }
        let grid: Vec<usize> = by_kind[&StrategyKind::Bl][0]
            .points
            .iter()
            .map(|p| p.k)
            .collect();
        let same_grid = by_kind
            .values()
            .flatten()
            .all(|r| r.points.iter().map(|p| p.k).eq(grid.iter().copied()));
        if !same_grid || grid.is_empty() {
            return Err(HarnessError::InconsistentGrid(ds.clone()));
        }

        struct Raw {
            runs: usize,
            cc_excluded: usize,
            auc: [Option<f64>; 2],
            auc_per_run: [Option<f64>; 2],
        }
        let raw: Vec<Raw> = strategies
            .iter()
            .map(|k| {
                let runs = &by_kind[k];
                let curve = mean_curve(runs);
                let per_run = |m| mean_of(runs.iter().filter_map(|r| auc(r, m)));
                Raw {
                    runs: runs.len(),
                    cc_excluded: runs.iter().filter(|r| !r.cc_defined()).count(),
                    auc: [
                        mean_curve_auc(&curve, Measure::Rmse),
                        mean_curve_auc(&curve, Measure::Cc),
                    ],
                    auc_per_run: [per_run(Measure::Rmse), per_run(Measure::Cc)],
                }
            })
            .collect();
        let bl = strategies
            .iter()
            .position(|&k| k == StrategyKind::Bl)
            .expect("BL checked above");

        let mut cells_by_measure: Vec<Vec<MeasureCell>> = Vec::new();
        for (mi, m) in Measure::BOTH.into_iter().enumerate() {
            let normalized: Vec<Option<f64>> = raw
                .iter()
                .map(|r| ratio(r.auc[mi], raw[bl].auc[mi]))
                .collect();
            let ranks = rank(&normalized, m.smaller_is_better());
            cells_by_measure.push(
                raw.iter()
                    .zip(&normalized)
                    .zip(ranks)
                    .map(|((r, &norm), rank)| MeasureCell {
                        auc: r.auc[mi],
                        auc_per_run: r.auc_per_run[mi],
                        normalized: norm,
                        normalized_per_run: ratio(r.auc_per_run[mi], raw[bl].auc_per_run[mi]),
                        rank,
                    })
                    .collect(),
            );
        }
        let cc_cells = cells_by_measure.pop().expect("two measures");
        let rmse_cells = cells_by_measure.pop().expect("two measures");
        let cells = strategies
            .iter()
            .zip(&raw)
            .zip(rmse_cells.into_iter().zip(cc_cells))
            .map(|((&strategy, r), (rmse, cc))| CellSummary {
                strategy,
                runs: r.runs,
                cc_excluded: r.cc_excluded,
                rmse,
                cc,
            })
            .collect();
        datasets.push(DatasetSummary {
            dataset: ds.clone(),
            k0: grid[0],
            budget: *grid.last().expect("nonempty grid"),
            degenerate: grid.len() < 2,
            cells,
        });
    }

    let rank_row = |m: Measure| {
        let mean: Vec<f64> = (0..strategies.len())
            .map(|i| {
                mean_of(datasets.iter().map(|d| d.cells[i].measure(m).rank as f64)).unwrap_or(0.0)
            })
            .collect();
        let order = rank(&mean.iter().map(|&v| Some(v)).collect::<Vec<_>>(), true);
        RankRow { mean, order }
    };
    Ok(AucSummary {
        average_rank_rmse: rank_row(Measure::Rmse),
        average_rank_cc: rank_row(Measure::Cc),
        strategies,
        datasets,
    })
}

/// Per-run AUCs divided by the dataset's mean BL per-run AUC, grouped by
/// dataset and strategy in repetition order. Runs with undefined CC are
/// skipped for [`Measure::Cc`].
pub fn normalized_run_aucs(
    records: &[RunRecord],
    measure: Measure,
) -> BTreeMap<String, BTreeMap<StrategyKind, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (ds, by_kind) in cohorts(records) {
        let Some(bl) = by_kind
            .get(&StrategyKind::Bl)
            .and_then(|runs| mean_of(runs.iter().filter_map(|r| auc(r, measure))))
            .filter(|v| *v != 0.0)
        else {
            continue;
        };
        let per_kind = by_kind
            .into_iter()
            .map(|(kind, runs)| {
                (
                    kind,
                    runs.iter()
                        .filter_map(|r| auc(r, measure))
                        .map(|a| a / bl)
                        .collect(),
                )
            })
            .collect();
        out.insert(ds, per_kind);
    }
    out
}
