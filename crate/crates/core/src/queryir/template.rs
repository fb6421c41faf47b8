//! Query templates: a base query plus one placeholder column, expanded into
//! one instance per group of sampled values.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::query::{CmpOp, Predicate, Query};
use super::QueryError;
use crate::datastore::{year_of_days, year_start_days, ColumnKind, SampleSet, SchemaCatalog, TableStore, Value};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

/// How sampled placeholder values are grouped into instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grouping {
    /// One equality instance per distinct sampled value.
    Distinct,
    /// One range instance per calendar year present in the sample.
    Year,
    /// `k` equal-width ranges spanning the sampled minimum and maximum.
    Buckets { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub base: Query,
    pub placeholder: ColumnRef,
    pub grouping: Grouping,
}

impl QueryTemplate {
    pub fn new(
        base: Query,
        placeholder: ColumnRef,
        grouping: Grouping,
        schema: &SchemaCatalog,
    ) -> Result<Self, QueryError> {
        let t = QueryTemplate {
            base,
            placeholder,
            grouping,
        };
        t.validate(schema)?;
        Ok(t)
    }

    pub fn validate(&self, schema: &SchemaCatalog) -> Result<(), QueryError> {
        self.base.validate(schema)?;
        let ColumnRef { table, column } = &self.placeholder;
        if !self.base.tables.contains(table) {
            return Err(QueryError::InvalidTemplate(format!(
                "placeholder table {table} is not part of the query"
            )));
        }
        let kind = schema
            .table(table)
            .and_then(|t| t.column(column))
            .map(|c| c.kind)
            .ok_or_else(|| QueryError::UnknownColumn {
                table: table.clone(),
                column: column.clone(),
            })?;
        if self
            .base
            .predicates_on(table)
            .any(|p| p.column == *column && p.op == CmpOp::Eq)
        {
            return Err(QueryError::InvalidTemplate(format!(
                "{table}.{column} is already fixed by an equality predicate"
            )));
        }
        match self.grouping {
            Grouping::Year if kind != ColumnKind::Date => Err(QueryError::NonDateColumnForYear {
                table: table.clone(),
                column: column.clone(),
            }),
            Grouping::Buckets { k: 0 } => Err(QueryError::InvalidTemplate("bucket count must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// One expanded template instance. `key` orders instances; `label` is the
/// display form (value, year or bucket range).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateInstance {
    pub label: String,
    pub key: f64,
    pub query: Query,
}

/// Non-null sampled values of `table.column`.
pub fn sampled_values(
    store: &TableStore,
    samples: &SampleSet,
    table: &str,
    column: &str,
) -> Result<Vec<Value>, QueryError> {
    let col = store.get_column(table, column).map_err(|_| QueryError::UnknownColumn {
        table: table.into(),
        column: column.into(),
    })?;
    let rows = samples
        .rows(table)
        .ok_or_else(|| QueryError::UnknownTable(table.into()))?;
    Ok(rows.iter().filter_map(|&r| col.get(r as usize)).collect())
}

/// Expands `template` over the placeholder column's sampled values. The
/// values must all have the placeholder column's kind. Instances come back
/// sorted by key with duplicate queries removed.
pub fn expand_template(template: &QueryTemplate, values: &[Value]) -> Result<Vec<TemplateInstance>, QueryError> {
    let ColumnRef { table, column } = &template.placeholder;
    let empty = || QueryError::EmptySample {
        table: table.clone(),
        column: column.clone(),
    };
    let Some(first) = values.first() else {
        return Err(empty());
    };
    let kind = first.kind();
    if values.iter().any(|v| v.kind() != kind) {
        return Err(QueryError::LiteralKind {
            table: table.clone(),
            column: column.clone(),
            expected: kind,
        });
    }

    let with = |label: String, key: f64, preds: Vec<Predicate>| {
        let mut query = template.base.clone();
        for p in preds {
            add_tightest(&mut query.predicates, p);
        }
        TemplateInstance { label, key, query }
    };
    let pred = |op, value| Predicate::new(table.clone(), column.clone(), op, value);

    let mut out: Vec<TemplateInstance> = match template.grouping {
        Grouping::Distinct => {
            let distinct: BTreeSet<Value> = values.iter().copied().collect();
            distinct
                .into_iter()
                .map(|v| with(v.to_string(), v.as_f64(), vec![pred(CmpOp::Eq, v)]))
                .collect()
        }
        Grouping::Year => {
            if kind != ColumnKind::Date {
                return Err(QueryError::NonDateColumnForYear {
                    table: table.clone(),
                    column: column.clone(),
                });
            }
            let years: BTreeSet<i32> = values
                .iter()
                .map(|v| match v {
                    Value::Date(d) => year_of_days(*d),
                    _ => unreachable!("kind checked"),
                })
                .collect();
            years
                .into_iter()
                .map(|y| {
                    let lo = year_start_days(y) - 1;
                    let hi = year_start_days(y + 1);
                    with(
                        y.to_string(),
                        y as f64,
                        vec![pred(CmpOp::Gt, Value::Date(lo)), pred(CmpOp::Lt, Value::Date(hi))],
                    )
                })
                .collect()
        }
        Grouping::Buckets { k } => {
            if k == 0 {
                return Err(QueryError::InvalidTemplate("bucket count must be at least 1".into()));
            }
            let min = values.iter().map(Value::as_f64).fold(f64::INFINITY, f64::min);
            let max = values.iter().map(Value::as_f64).fold(f64::NEG_INFINITY, f64::max);
            let k = if min == max { 1 } else { k };
            let width = (max - min) / k as f64;
            (0..k)
                .map(|i| {
                    let lo = min + width * i as f64;
                    let last = i + 1 == k;
                    let hi = if last { max } else { min + width * (i + 1) as f64 };
                    let label = format!(
                        "[{}, {}{}",
                        bound_label(kind, lo),
                        bound_label(kind, hi),
                        if last { "]" } else { ")" }
                    );
                    let (gt, lt) = range_bounds(kind, lo, hi, last);
                    with(label, lo, vec![pred(CmpOp::Gt, gt), pred(CmpOp::Lt, lt)])
                })
                .collect()
        }
    };
    out.sort_by(|a, b| a.key.total_cmp(&b.key));
    let mut seen = BTreeSet::new();
    out.retain(|i| seen.insert(i.query.clone()));
    Ok(out)
}

/// Encodes `lo <= x < hi` (or `<= hi` when `closed`) as a strict `>` and a
/// strict `<` bound for a column of `kind`.
fn range_bounds(kind: ColumnKind, lo: f64, hi: f64, closed: bool) -> (Value, Value) {
    match kind {
        ColumnKind::Float => {
            let upper = if closed { hi.next_up() } else { hi };
            (Value::Float(lo.next_down()), Value::Float(upper))
        }
        ColumnKind::Integer | ColumnKind::Date => {
            let gt = lo.ceil() - 1.0;
            let lt = if closed { hi.floor() + 1.0 } else { hi.ceil() };
            (Value::from_f64(kind, gt), Value::from_f64(kind, lt))
        }
    }
}

fn bound_label(kind: ColumnKind, v: f64) -> String {
    match kind {
        ColumnKind::Float => format!("{}", (v * 1e6).round() / 1e6),
        ColumnKind::Integer => {
            if v.fract() == 0.0 {
                format!("{v}")
            } else {
                format!("{:.2}", v)
            }
        }
        ColumnKind::Date => Value::Date(v.floor() as i32).to_string(),
    }
}

/// Adds `p`, keeping only the tighter of two bounds with the same column
/// and operator.
fn add_tightest(preds: &mut BTreeSet<Predicate>, p: Predicate) {
    let existing = preds
        .iter()
        .find(|q| q.table == p.table && q.column == p.column && q.op == p.op)
        .cloned();
    match existing {
        None => {
            preds.insert(p);
        }
        Some(q) => {
            let keep_new = match p.op {
                CmpOp::Gt => p.value > q.value,
                CmpOp::Lt => p.value < q.value,
                CmpOp::Eq => true,
            };
            if keep_new {
                preds.remove(&q);
                preds.insert(p);
            }
        }
    }
}
