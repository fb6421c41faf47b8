//! Q-error evaluation of several estimators over a workload.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DeepSketch, SketchError};
use crate::datastore::{true_cardinality, TableStore};
use crate::mscn::{qerror, QErrorSummary};
use crate::queryir::{render_sql, Query};

pub trait CardinalityEstimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, query: &Query) -> Result<f64, SketchError>;
}

pub struct SketchModel<'a>(pub &'a DeepSketch);

impl CardinalityEstimator for SketchModel<'_> {
    fn name(&self) -> &str {
        "sketch"
    }

    fn estimate(&self, query: &Query) -> Result<f64, SketchError> {
        Ok(self.0.estimate(query)?.cardinality)
    }
}

pub struct SamplingBaseline<'a>(pub &'a DeepSketch);

impl CardinalityEstimator for SamplingBaseline<'_> {
    fn name(&self) -> &str {
        "sampling"
    }

    fn estimate(&self, query: &Query) -> Result<f64, SketchError> {
        self.0.sampling_estimate(query)
    }
}

pub struct IndependenceBaseline<'a>(pub &'a DeepSketch);

impl CardinalityEstimator for IndependenceBaseline<'_> {
    fn name(&self) -> &str {
        "independence"
    }

    fn estimate(&self, query: &Query) -> Result<f64, SketchError> {
        self.0.independence_estimate(query)
    }
}

/// Exact counts from the store, the perfect estimator.
pub struct GroundTruth<'a>(pub &'a TableStore);

impl CardinalityEstimator for GroundTruth<'_> {
    fn name(&self) -> &str {
        "truth"
    }

    fn estimate(&self, query: &Query) -> Result<f64, SketchError> {
        Ok(true_cardinality(self.0, query)? as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub qerror: QErrorSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sql: String,
    pub truth: u64,
    /// One per estimator, in report order.
    pub estimates: Vec<f64>,
    pub qerrors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub workload: String,
    pub estimators: Vec<String>,
    pub summaries: Vec<EstimatorSummary>,
    pub queries: Vec<QueryRecord>,
}

impl EvalReport {
    pub fn summary(&self, estimator: &str) -> Option<&QErrorSummary> {
        self.summaries
            .iter()
            .find(|s| s.estimator == estimator)
            .map(|s| &s.qerror)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table: one row per estimator, one column per quantile.
    pub fn to_text(&self) -> String {
        let name_w = self
            .estimators
            .iter()
            .map(String::len)
            .chain([self.workload.len()])
            .max()
            .unwrap_or(0);
        let cells: Vec<Vec<String>> = self
            .summaries
            .iter()
            .map(|s| s.qerror.values().iter().map(|v| format_qerror(*v)).collect())
            .collect();
        let widths: Vec<usize> = (0..QErrorSummary::COLUMNS.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|row| row[i].len())
                    .chain([QErrorSummary::COLUMNS[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = format!("{:<name_w$}", self.workload);
        for (col, w) in QErrorSummary::COLUMNS.iter().zip(&widths) {
            let _ = write!(out, "  {col:>w$}");
        }
        out.push('\n');
        for (s, row) in self.summaries.iter().zip(&cells) {
            let _ = write!(out, "{:<name_w$}", s.estimator);
            for (cell, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

fn format_qerror(v: f64) -> String {
    if v >= 1e5 {
        format!("{v:.3e}")
    } else {
        format!("{v:.2}")
    }
}

/// Runs every estimator on every query and summarizes the q-errors.
/// Records keep workload order.
pub fn evaluate_workload(
    workload: &str,
    estimators: &[&dyn CardinalityEstimator],
    queries: &[Query],
    store: &TableStore,
) -> Result<EvalReport, SketchError> {
    if queries.is_empty() {
        return Err(SketchError::EmptyWorkload);
    }
    let mut records = Vec::with_capacity(queries.len());
    for q in queries {
        let truth = true_cardinality(store, q)?;
        let estimates = estimators
            .iter()
            .map(|e| e.estimate(q))
            .collect::<Result<Vec<f64>, _>>()?;
        let qerrors = estimates.iter().map(|&e| qerror(e, truth as f64, 1.0)).collect();
        records.push(QueryRecord {
            sql: render_sql(q),
            truth,
            estimates,
            qerrors,
        });
    }
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let errors: Vec<f64> = records.iter().map(|r| r.qerrors[i]).collect();
            EstimatorSummary {
                estimator: e.name().to_string(),
                qerror: QErrorSummary::from_errors(&errors).expect("nonempty workload"),
            }
        })
        .collect();
    Ok(EvalReport {
        workload: workload.to_string(),
        estimators: estimators.iter().map(|e| e.name().to_string()).collect(),
        summaries,
        queries: records,
    })
}
