//! Equi-depth histograms for the independence baseline.

use serde::{Deserialize, Serialize};

use super::table::Column;
use crate::queryir::CmpOp;

pub const DEFAULT_BUCKETS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub distinct: u64,
}

/// Buckets hold roughly equal row counts; equal values never straddle two
/// buckets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquiDepthHistogram {
    pub total_rows: u64,
    pub null_count: u64,
    pub buckets: Vec<Bucket>,
}

impl EquiDepthHistogram {
    pub fn build(column: &Column, buckets: usize) -> Self {
        let mut values: Vec<f64> = column.values().map(|v| v.as_f64()).collect();
        values.sort_by(f64::total_cmp);
        let total_rows = column.len() as u64;
        let null_count = total_rows - values.len() as u64;
        let depth = values.len().div_ceil(buckets.max(1)).max(1) as u64;

        let mut out: Vec<Bucket> = Vec::new();
        let mut i = 0;
        while i < values.len() {
            let v = values[i];
            let mut j = i;
            while j < values.len() && values[j] == v {
                j += 1;
            }
            let run = (j - i) as u64;
            match out.last_mut() {
                Some(b) if b.count < depth => {
                    b.hi = v;
                    b.count += run;
                    b.distinct += 1;
                }
                _ => out.push(Bucket {
                    lo: v,
                    hi: v,
                    count: run,
                    distinct: 1,
                }),
            }
            i = j;
        }
        EquiDepthHistogram {
            total_rows,
            null_count,
            buckets: out,
        }
    }

    fn fraction(&self, rows: f64) -> f64 {
        if self.total_rows == 0 {
            0.0
        } else {
            (rows / self.total_rows as f64).clamp(0.0, 1.0)
        }
    }

    fn rows_eq(&self, v: f64) -> f64 {
        self.buckets
            .iter()
            .find(|b| b.lo <= v && v <= b.hi)
            .map_or(0.0, |b| b.count as f64 / b.distinct as f64)
    }

    fn rows_lt(&self, v: f64) -> f64 {
        let mut rows = 0.0;
        for b in &self.buckets {
            if b.hi < v {
                rows += b.count as f64;
            } else if b.lo < v {
                rows += b.count as f64 * (v - b.lo) / (b.hi - b.lo);
            }
        }
        rows
    }

    /// Estimated fraction of all rows (nulls included in the denominator)
    /// satisfying `column op v`.
    pub fn selectivity(&self, op: CmpOp, v: f64) -> f64 {
        let non_null = (self.total_rows - self.null_count) as f64;
        let rows = match op {
            CmpOp::Eq => self.rows_eq(v),
            CmpOp::Lt => self.rows_lt(v),
            CmpOp::Gt => (non_null - self.rows_lt(v) - self.rows_eq(v)).max(0.0),
        };
        self.fraction(rows)
    }
}
