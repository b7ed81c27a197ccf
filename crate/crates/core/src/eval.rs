//! Recall at top-N under a tIoU threshold, and the averaged report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refine::{tiou, TimeSpan};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("predictions reference query `{0}` which has no ground truth")]
    UnknownQuery(String),
    #[error("query `{0}` has more than one ground-truth span (enable multi_gt to allow)")]
    DuplicateGroundTruth(String),
    #[error("ground truth for `{0}` is degenerate (end <= start)")]
    DegenerateGroundTruth(String),
    #[error("top-N must be at least 1")]
    ZeroN,
    #[error("tIoU threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub query_id: String,
    pub span: TimeSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Allow several ground-truth spans per query; any match is a hit.
    pub multi_gt: bool,
}

pub type Predictions = BTreeMap<String, Vec<TimeSpan>>;

/// Recall at `(N, K)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub n: usize,
    pub k: f64,
    pub recall: f64,
}

impl MetricCell {
    pub fn label(&self) -> String {
        format!("R{}@{}", self.n, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cells: Vec<MetricCell>,
    pub average: f64,
    pub num_queries: usize,
}

pub const DEFAULT_NS: [usize; 2] = [1, 5];
pub const DEFAULT_KS: [f64; 3] = [0.1, 0.3, 0.5];

impl MetricsReport {
    pub fn get(&self, n: usize, k: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.n == n && (c.k - k).abs() < 1e-12)
            .map(|c| c.recall)
    }

    /// Percentages, one column per cell plus the average.
    pub fn to_table(&self) -> String {
        let mut header = String::new();
        let mut row = String::new();
        for cell in &self.cells {
            let label = cell.label();
            let width = label.len().max(6);
            let _ = write!(header, "{label:>width$}  ");
            let _ = write!(row, "{:>width$.1}  ", cell.recall * 100.0);
        }
        let _ = write!(header, "{:>6}", "Avg.");
        let _ = write!(row, "{:>6.1}", self.average * 100.0);
        format!("{header}\n{row}\n")
    }
}

struct Index<'a> {
    gts: BTreeMap<&'a str, Vec<TimeSpan>>,
}

fn index_ground_truth<'a>(
    gts: &'a [GroundTruth],
    options: EvalOptions,
) -> Result<Index<'a>, EvalError> {
    let mut map: BTreeMap<&str, Vec<TimeSpan>> = BTreeMap::new();
    for gt in gts {
        if !(gt.span.end_s > gt.span.start_s) {
            return Err(EvalError::DegenerateGroundTruth(gt.query_id.clone()));
        }
        let entry = map.entry(gt.query_id.as_str()).or_default();
        if !entry.is_empty() && !options.multi_gt {
            return Err(EvalError::DuplicateGroundTruth(gt.query_id.clone()));
        }
        entry.push(gt.span);
    }
    Ok(Index { gts: map })
}

fn check_predictions(predictions: &Predictions, index: &Index<'_>) -> Result<(), EvalError> {
    match predictions
        .keys()
        .find(|q| !index.gts.contains_key(q.as_str()))
    {
        Some(q) => Err(EvalError::UnknownQuery(q.clone())),
        None => Ok(()),
    }
}

fn hit(preds: &[TimeSpan], gts: &[TimeSpan], n: usize, k: f64) -> bool {
    preds.iter().take(n).any(|p| {
        gts.iter()
            .any(|g| tiou(*p, *g).map(|v| v >= k).unwrap_or(false))
    })
}

fn validate_cell(n: usize, k: f64) -> Result<(), EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(EvalError::BadThreshold(k));
    }
    Ok(())
}

/// Fraction of ground-truth queries with a hit among their first `n`
/// predictions. Queries without a prediction list count as misses.
pub fn recall_at(
    predictions: &Predictions,
    gts: &[GroundTruth],
    n: usize,
    k: f64,
    options: EvalOptions,
) -> Result<f64, EvalError> {
    validate_cell(n, k)?;
    let index = index_ground_truth(gts, options)?;
    check_predictions(predictions, &index)?;
    Ok(recall_indexed(predictions, &index, n, k))
}

fn recall_indexed(predictions: &Predictions, index: &Index<'_>, n: usize, k: f64) -> f64 {
    if index.gts.is_empty() {
        return 0.0;
    }
    let hits = index
        .gts
        .iter()
        .filter(|(q, spans)| {
            predictions
                .get(**q)
                .is_some_and(|preds| hit(preds, spans, n, k))
        })
        .count();
    hits as f64 / index.gts.len() as f64
}

pub fn metrics_report(
    predictions: &Predictions,
    gts: &[GroundTruth],
    ns: &[usize],
    ks: &[f64],
    options: EvalOptions,
) -> Result<MetricsReport, EvalError> {
    for &n in ns {
        for &k in ks {
            validate_cell(n, k)?;
        }
    }
    let index = index_ground_truth(gts, options)?;
    check_predictions(predictions, &index)?;
    let cells: Vec<MetricCell> = ns
        .iter()
        .flat_map(|&n| ks.iter().map(move |&k| (n, k)))
        .map(|(n, k)| MetricCell {
            n,
            k,
            recall: recall_indexed(predictions, &index, n, k),
        })
        .collect();
    let average = if cells.is_empty() {
        0.0
    } else {
        cells.iter().map(|c| c.recall).sum::<f64>() / cells.len() as f64
    };
    Ok(MetricsReport {
        cells,
        average,
        num_queries: index.gts.len(),
    })
}

/// Query ids that appear in `gts`, deduplicated.
pub fn query_ids(gts: &[GroundTruth]) -> BTreeSet<&str> {
    gts.iter().map(|g| g.query_id.as_str()).collect()
}
