//! Sample-selection strategies for sequential pool-based active learning.
//!
//! Every strategy answers the same question: given the pool, the labeled
//! subset and (where needed) a model fitted on it, which unlabeled pool index
//! should be labeled next. All argmax scans run over unlabeled indices in
//! ascending order and keep the first maximum, so ties go to the lowest index.
//!
//! | kind | score of an unlabeled `x_n` |
//! |------|-----------------------------|
//! | BL   | uniform random draw |
//! | QBC  | variance of `P` bootstrap-committee predictions |
//! | EMCM | `(1/P) sum_p |(f_p(x_n) - f(x_n)) x_n|` |
//! | GSx  | `min_m |x_n - x_m|` |
//! | GSy  | `min_m |f(x_n) - y_m|` |
//! | iGS  | `min_m |x_n - x_m| * |f(x_n) - y_m|` |

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ridge_fit_rows, ModelConfig, ModelError, RidgeModel};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("pool index {0} is out of range")]
    OutOfRange(usize),
    #[error("pool index {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("pool index {0} is not in the unlabeled set")]
    NotUnlabeled(usize),
    #[error("no unlabeled samples left")]
    EmptyUnlabeled,
    #[error("no labeled samples yet")]
    EmptyLabeled,
    #[error("strategy needs at least {need} labeled samples (K_0), have {have}")]
    TooFewLabeled { have: usize, need: usize },
    #[error("committee size must be at least 2, got {0}")]
    CommitteeTooSmall(usize),
    #[error("strategy {0} needs a model fitted on the labeled set")]
    MissingModel(StrategyKind),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = SamplerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "BL")]
    Bl,
    #[serde(rename = "QBC")]
    Qbc,
    #[serde(rename = "EMCM")]
    Emcm,
    #[serde(rename = "GSx")]
    Gsx,
    #[serde(rename = "GSy")]
    Gsy,
    #[serde(rename = "iGS")]
    Igs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Bl,
        StrategyKind::Qbc,
        StrategyKind::Emcm,
        StrategyKind::Gsx,
        StrategyKind::Gsy,
        StrategyKind::Igs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Bl => "BL",
            StrategyKind::Qbc => "QBC",
            StrategyKind::Emcm => "EMCM",
            StrategyKind::Gsx => "GSx",
            StrategyKind::Gsy => "GSy",
            StrategyKind::Igs => "iGS",
        }
    }

    /// BL, QBC and EMCM start from a random K_0; the greedy family starts
    /// from GSx.
    pub fn random_init(self) -> bool {
        matches!(
            self,
            StrategyKind::Bl | StrategyKind::Qbc | StrategyKind::Emcm
        )
    }

    pub fn uses_committee(self) -> bool {
        matches!(self, StrategyKind::Qbc | StrategyKind::Emcm)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

/// How GSx picks its very first sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstPick {
    /// Closest to the mean feature vector.
    #[default]
    Centroid,
    /// Smallest total distance to the other pool samples.
    Medoid,
}

fn default_committee() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_committee")]
    pub committee_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub first_pick: FirstPick,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            committee_size: default_committee(),
            seed: 0,
            first_pick: FirstPick::Centroid,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Pool features plus the ordered labeled set.
///
/// Distances from every pool sample to each labeled sample are cached when
/// the sample is labeled, so GSx and iGS scans cost O(N k) per selection.
#[derive(Debug, Clone)]
pub struct PoolState {
    features: Array2<f64>,
    k0: usize,
    labeled: Vec<usize>,
    labels: Vec<f64>,
    /// Labels by pool index; zero where unlabeled.
    label_by_index: Array1<f64>,
    is_labeled: Vec<bool>,
    /// `dist_to_labeled[m][n]` = |x_n - x_{labeled[m]}|
    dist_to_labeled: Vec<Vec<f64>>,
    min_dist: Vec<f64>,
}

pub fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

impl PoolState {
    /// `k0` is the number of labels required before model-based strategies
    /// may run, normally the feature count.
    pub fn new(features: Array2<f64>, k0: usize) -> Self {
        let n = features.nrows();
        Self {
            features,
            k0,
            labeled: Vec::new(),
            labels: Vec::new(),
            label_by_index: Array1::zeros(n),
            is_labeled: vec![false; n],
            dist_to_labeled: Vec::new(),
            min_dist: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.features.row(n)
    }

    /// Labeled pool indices in selection order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Labels aligned with [`PoolState::labeled`].
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label_by_index(&self) -> ArrayView1<'_, f64> {
        self.label_by_index.view()
    }

    pub fn is_labeled(&self, n: usize) -> bool {
        self.is_labeled.get(n).copied().unwrap_or(false)
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| !self.is_labeled[n])
    }

    pub fn n_unlabeled(&self) -> usize {
        self.len() - self.labeled.len()
    }

    pub fn label(&mut self, n: usize, y: f64) -> Result<()> {
        if n >= self.len() {
            return Err(SamplerError::OutOfRange(n));
        }
        if self.is_labeled[n] {
            return Err(SamplerError::AlreadyLabeled(n));
        }
        let xn = self.features.row(n);
        let column: Vec<f64> = self
            .features
            .axis_iter(Axis(0))
            .map(|row| euclidean(row, xn))
            .collect();
        for (best, &d) in self.min_dist.iter_mut().zip(&column) {
            if d < *best {
                *best = d;
            }
        }
        self.dist_to_labeled.push(column);
        self.is_labeled[n] = true;
        self.labeled.push(n);
        self.labels.push(y);
        self.label_by_index[n] = y;
        Ok(())
    }

    fn check_unlabeled(&self, n: usize) -> Result<()> {
        if n >= self.len() || self.is_labeled[n] {
            return Err(SamplerError::NotUnlabeled(n));
        }
        Ok(())
    }

    fn check_has_labels(&self) -> Result<()> {
        if self.labeled.is_empty() {
            return Err(SamplerError::EmptyLabeled);
        }
        Ok(())
    }

    fn check_k0(&self) -> Result<()> {
        let need = self.k0.max(1);
        if self.labeled.len() < need {
            return Err(SamplerError::TooFewLabeled {
                have: self.labeled.len(),
                need,
            });
        }
        Ok(())
    }
}

/// Shortest input-space distance from unlabeled sample `n` to the labeled set.
pub fn min_input_distance(state: &PoolState, n: usize) -> Result<f64> {
    state.check_has_labels()?;
    state.check_unlabeled(n)?;
    Ok(state.min_dist[n])
}

/// Shortest distance from the prediction `f(x_n)` to the labeled outputs.
pub fn min_output_distance(state: &PoolState, model: &RidgeModel, n: usize) -> Result<f64> {
    state.check_has_labels()?;
    state.check_unlabeled(n)?;
    Ok(output_distance(state, model.predict_one(state.row(n))))
}

fn output_distance(state: &PoolState, prediction: f64) -> f64 {
    state
        .labels
        .iter()
        .map(|y| (prediction - y).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Minimum over labeled `m` of the per-neighbor product
/// `|x_n - x_m| * |f(x_n) - y_m|`.
pub fn min_product_distance(state: &PoolState, model: &RidgeModel, n: usize) -> Result<f64> {
    state.check_has_labels()?;
    state.check_unlabeled(n)?;
    Ok(product_distance(state, n, model.predict_one(state.row(n))))
}

fn product_distance(state: &PoolState, n: usize, prediction: f64) -> f64 {
    state
        .dist_to_labeled
        .iter()
        .zip(&state.labels)
        .map(|(col, y)| col[n] * (prediction - y).abs())
        .fold(f64::INFINITY, f64::min)
}

/// First index attaining the maximum score among unlabeled samples. NaN
/// scores never win.
fn argmax_unlabeled(state: &PoolState, mut score: impl FnMut(usize) -> f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for n in state.unlabeled() {
        let s = score(n);
        match best {
            None => best = Some((n, if s.is_nan() { f64::NEG_INFINITY } else { s })),
            Some((_, b)) if s > b => best = Some((n, s)),
            _ => {}
        }
    }
    best.map(|(n, _)| n).ok_or(SamplerError::EmptyUnlabeled)
}

/// Index of the sample closest to the centroid; lowest index on ties.
pub fn select_first_gsx(features: ArrayView2<f64>) -> usize {
    let n = features.nrows();
    assert!(n > 0, "cannot select from an empty pool");
    let centroid = features.mean_axis(Axis(0)).expect("nonempty pool");
    let mut best = (0, f64::INFINITY);
    for (i, row) in features.axis_iter(Axis(0)).enumerate() {
        let d = euclidean(row, centroid.view());
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Index with the smallest summed distance to all other samples.
pub fn select_first_medoid(features: ArrayView2<f64>) -> usize {
    let n = features.nrows();
    assert!(n > 0, "cannot select from an empty pool");
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let total: f64 = (0..n)
            .map(|j| euclidean(features.row(i), features.row(j)))
            .sum();
        if total < best.1 {
            best = (i, total);
        }
    }
    best.0
}

/// GSx: farthest unlabeled sample from the labeled set in input space. With
/// nothing labeled yet it returns the centroid pick.
pub fn next_gsx(state: &PoolState) -> Result<usize> {
    if state.n_unlabeled() == 0 {
        return Err(SamplerError::EmptyUnlabeled);
    }
    if state.labeled.is_empty() {
        return Ok(select_first_gsx(state.features()));
    }
    argmax_unlabeled(state, |n| state.min_dist[n])
}

pub fn next_gsy(state: &PoolState, model: &RidgeModel) -> Result<usize> {
    state.check_k0()?;
    argmax_unlabeled(state, |n| {
        output_distance(state, model.predict_one(state.row(n)))
    })
}

pub fn next_igs(state: &PoolState, model: &RidgeModel) -> Result<usize> {
    state.check_k0()?;
    argmax_unlabeled(state, |n| {
        product_distance(state, n, model.predict_one(state.row(n)))
    })
}

pub fn next_random<R: Rng + ?Sized>(state: &PoolState, rng: &mut R) -> Result<usize> {
    let candidates: Vec<usize> = state.unlabeled().collect();
    if candidates.is_empty() {
        return Err(SamplerError::EmptyUnlabeled);
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

const MAX_RESAMPLE_ATTEMPTS: usize = 64;

/// Draws `p` bootstrap resamples (size k, with replacement) of the labeled
/// set, as pool indices. A resample with a single distinct sample is redrawn
/// when the labeled set has at least two.
pub fn draw_committee<R: Rng + ?Sized>(
    state: &PoolState,
    p: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if p < 2 {
        return Err(SamplerError::CommitteeTooSmall(p));
    }
    state.check_has_labels()?;
    let k = state.labeled.len();
    let mut committee = Vec::with_capacity(p);
    for _ in 0..p {
        let mut resample = Vec::new();
        for _attempt in 0..MAX_RESAMPLE_ATTEMPTS {
            resample = (0..k)
                .map(|_| state.labeled[rng.random_range(0..k)])
                .collect();
            if k < 2 || resample.iter().any(|&i| i != resample[0]) {
                break;
            }
        }
        committee.push(resample);
    }
    Ok(committee)
}

pub fn fit_committee(
    state: &PoolState,
    resamples: &[Vec<usize>],
    model: &ModelConfig,
) -> Result<Vec<RidgeModel>> {
    resamples
        .iter()
        .map(|rows| {
            ridge_fit_rows(state.features(), state.label_by_index(), rows, model)
                .map_err(SamplerError::from)
        })
        .collect()
}

/// Population variance of the committee predictions.
pub fn committee_variance(committee: &[RidgeModel], x: ArrayView1<f64>) -> f64 {
    let preds: Vec<f64> = committee.iter().map(|m| m.predict_one(x)).collect();
    let p = preds.len() as f64;
    let mean = preds.iter().sum::<f64>() / p;
    preds.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p
}

/// Expected model change of a linear model: mean over committee members of
/// the norm of the gradient `(f_p(x) - f(x)) x`.
pub fn expected_model_change(
    master: &RidgeModel,
    committee: &[RidgeModel],
    x: ArrayView1<f64>,
) -> f64 {
    let f = master.predict_one(x);
    let total: f64 = committee
        .iter()
        .map(|m| {
            let residual = m.predict_one(x) - f;
            x.iter()
                .map(|&v| (residual * v) * (residual * v))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / committee.len() as f64
}

pub fn next_qbc<R: Rng + ?Sized>(
    state: &PoolState,
    config: &StrategyConfig,
    model: &ModelConfig,
    rng: &mut R,
) -> Result<usize> {
    state.check_k0()?;
    let resamples = draw_committee(state, config.committee_size, rng)?;
    let committee = fit_committee(state, &resamples, model)?;
    argmax_unlabeled(state, |n| committee_variance(&committee, state.row(n)))
}

/// `master` must be fitted on the full labeled set.
pub fn next_emcm<R: Rng + ?Sized>(
    state: &PoolState,
    config: &StrategyConfig,
    model: &ModelConfig,
    master: &RidgeModel,
    rng: &mut R,
) -> Result<usize> {
    state.check_k0()?;
    let resamples = draw_committee(state, config.committee_size, rng)?;
    let committee = fit_committee(state, &resamples, model)?;
    argmax_unlabeled(state, |n| {
        expected_model_change(master, &committee, state.row(n))
    })
}

/// A strategy bound to its random stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    config: StrategyConfig,
    model: ModelConfig,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(config: StrategyConfig, model: ModelConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self { config, model, rng }
    }

    pub fn kind(&self) -> StrategyKind {
        self.config.kind
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    /// Picks the next sample to label. `fitted` is the model trained on the
    /// current labeled set; GSy, iGS and EMCM require it.
    pub fn select(&mut self, state: &PoolState, fitted: Option<&RidgeModel>) -> Result<usize> {
        let kind = self.config.kind;
        let need_model = || fitted.ok_or(SamplerError::MissingModel(kind));
        match kind {
            StrategyKind::Bl => next_random(state, &mut self.rng),
            StrategyKind::Qbc => next_qbc(state, &self.config, &self.model, &mut self.rng),
            StrategyKind::Emcm => {
                let master = need_model()?;
                next_emcm(state, &self.config, &self.model, master, &mut self.rng)
            }
            StrategyKind::Gsx => {
                if state.labeled().is_empty() && self.config.first_pick == FirstPick::Medoid {
                    return Ok(select_first_medoid(state.features()));
                }
                next_gsx(state)
            }
            StrategyKind::Gsy => next_gsy(state, need_model()?),
            StrategyKind::Igs => next_igs(state, need_model()?),
        }
    }
}
