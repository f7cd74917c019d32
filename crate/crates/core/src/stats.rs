//! Dunn's rank-based multiple comparisons with Benjamini-Hochberg adjustment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("group {group} contains a non-finite value")]
    NonFinite { group: usize },
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("{labels} labels for {groups} groups")]
    LabelMismatch { labels: usize, groups: usize },
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

/// Lower-triangle pair order: (1,0), (2,0), (2,1), (3,0), ...
pub fn pair_indices(groups: usize) -> Vec<(usize, usize)> {
    (1..groups)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub row: usize,
    pub col: usize,
    /// Positive when the `row` group ranks higher.
    pub z: f64,
    pub p: f64,
}

/// Midranks (1-based) of all values pooled, and the tie term sum(t^3 - t).
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let t = (end - start) as f64;
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-sided p-value from the standard normal.
fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Raw Dunn z statistics and two-sided p-values for every pair, in
/// [`pair_indices`] order.
pub fn dunn_pairwise(groups: &[Vec<f64>]) -> Result<Vec<PairTest>> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (g, values) in groups.iter().enumerate() {
        if values.is_empty() {
            return Err(StatsError::EmptyGroup(g));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { group: g });
        }
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let total = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);

    let mut mean_rank = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let sum: f64 = ranks[offset..offset + g.len()].iter().sum();
        mean_rank.push(sum / g.len() as f64);
        offset += g.len();
    }

    let variance = if total > 1.0 {
        total * (total + 1.0) / 12.0 - ties / (12.0 * (total - 1.0))
    } else {
        0.0
    };
    Ok(pair_indices(groups.len())
        .into_iter()
        .map(|(i, j)| {
            let se =
                (variance * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let diff = mean_rank[i] - mean_rank[j];
            let (z, p) = if se > 0.0 && se.is_finite() {
                let z = diff / se;
                (z, normal_two_sided(z))
            } else {
                (0.0, 1.0)
            };
            PairTest {
                row: i,
                col: j,
                z,
                p,
            }
        })
        .collect())
}

/// Benjamini-Hochberg step-up adjustment; output order matches input order.
pub fn fdr_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::InvalidP(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let rank = (pos + 1) as f64;
        running = running.min(p[i] * m as f64 / rank);
        // p * m / m can round below p
        adjusted[i] = running.min(1.0).max(p[i]);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub row: String,
    pub col: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

/// Pairwise comparisons for one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub measure: String,
    pub labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub pairs: Vec<PairResult>,
}

impl StatReport {
    pub fn adjusted(&self, row: &str, col: &str) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| (p.row == row && p.col == col) || (p.row == col && p.col == row))
            .map(|p| p.p_adjusted)
    }
}

/// Dunn's test followed by FDR adjustment across all pairs.
pub fn dunn_report(measure: &str, labels: &[String], groups: &[Vec<f64>]) -> Result<StatReport> {
    if labels.len() != groups.len() {
        return Err(StatsError::LabelMismatch {
            labels: labels.len(),
            groups: groups.len(),
        });
    }
    let tests = dunn_pairwise(groups)?;
    let raw: Vec<f64> = tests.iter().map(|t| t.p).collect();
    let adjusted = fdr_adjust(&raw)?;
    Ok(StatReport {
        measure: measure.to_string(),
        labels: labels.to_vec(),
        group_sizes: groups.iter().map(Vec::len).collect(),
        pairs: tests
            .into_iter()
            .zip(adjusted)
            .map(|(t, adj)| PairResult {
                row: labels[t.row].clone(),
                col: labels[t.col].clone(),
                z: t.z,
                p_raw: t.p,
                // guard against the last ulp when m * p / rank rounds below p
                p_adjusted: adj.max(t.p),
            })
            .collect(),
    })
}

/// `flags[i][j]` (i > j) is true when the adjusted p-value is below `alpha`.
pub fn significance_table(report: &StatReport, alpha: f64) -> Vec<Vec<bool>> {
    let n = report.labels.len();
    let mut flags = vec![vec![false; n]; n];
    let index = |name: &str| report.labels.iter().position(|l| l == name);
    for p in &report.pairs {
        if let (Some(i), Some(j)) = (index(&p.row), index(&p.col)) {
            flags[i][j] = p.p_adjusted < alpha;
        }
    }
    flags
}

/// Lower-triangular CSV: header of column labels, one row per later group.
pub fn report_csv(report: &StatReport) -> String {
    let n = report.labels.len();
    let mut out = String::from("group");
    for l in &report.labels[..n.saturating_sub(1)] {
        write!(out, ",{l}").unwrap();
    }
    out.push('\n');
    let mut pairs = report.pairs.iter();
    for i in 1..n {
        out.push_str(&report.labels[i]);
        for _ in 0..i {
            let p = pairs.next().expect("one pair per lower-triangle cell");
            write!(out, ",{:.6}", p.p_adjusted).unwrap();
        }
        for _ in i..n - 1 {
            out.push(',');
        }
        out.push('\n');
    }
    out
}

/// Fixed-width text table; significant entries are starred.
pub fn render_table(report: &StatReport, alpha: f64) -> String {
    let n = report.labels.len();
    let flags = significance_table(report, alpha);
    let mut out = String::new();
    writeln!(
        out,
        "{} adjusted p-values (Dunn + FDR), * = p < {alpha}",
        report.measure.to_uppercase()
    )
    .unwrap();
    write!(out, "{:>6}", "").unwrap();
    for l in &report.labels[..n.saturating_sub(1)] {
        write!(out, "{l:>9}").unwrap();
    }
    out.push('\n');
    let mut pairs = report.pairs.iter();
    for (i, (label, row)) in report.labels.iter().zip(&flags).enumerate().skip(1) {
        write!(out, "{label:>6}").unwrap();
        for &flag in row.iter().take(i) {
            let p = pairs.next().expect("one pair per lower-triangle cell");
            let text = format!("{:.4}", p.p_adjusted);
            let text = text.strip_prefix('0').unwrap_or(&text);
            let mark = if flag { "*" } else { " " };
            write!(out, "{text:>8}{mark}").unwrap();
        }
        out.push('\n');
    }
    out
}
