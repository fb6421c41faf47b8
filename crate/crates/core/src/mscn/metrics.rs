use serde::{Deserialize, Serialize};

/// Q-error distribution in the usual reporting columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QErrorSummary {
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl QErrorSummary {
    pub const COLUMNS: [&'static str; 6] = ["median", "90th", "95th", "99th", "max", "mean"];

    /// Nearest-rank quantiles. Returns `None` for an empty input.
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| quantile_sorted(&sorted, p);
        Some(QErrorSummary {
            median: q(0.5),
            p90: q(0.9),
            p95: q(0.95),
            p99: q(0.99),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.median, self.p90, self.p95, self.p99, self.max, self.mean]
    }
}

/// Nearest-rank quantile of ascending `sorted`: the element at rank
/// `ceil(p * n)`, 1-based.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}
