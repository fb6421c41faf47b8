use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::datastore::{FkEdge, SchemaCatalog, Value};

/// Comparison operators of the supported predicate class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Lt,
    Gt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 3] = [CmpOp::Eq, CmpOp::Lt, CmpOp::Gt];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }

    /// Position in the one-hot operator encoding.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether `lhs.cmp(rhs) == ord` satisfies `lhs op rhs`.
    pub fn accepts(self, ord: Ordering) -> bool {
        matches!(
            (self, ord),
            (CmpOp::Eq, Ordering::Equal) | (CmpOp::Lt, Ordering::Less) | (CmpOp::Gt, Ordering::Greater)
        )
    }

    /// The operator with its operands swapped (`a < b` iff `b > a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub table: String,
    pub column: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Predicate {
    pub fn new(table: impl Into<String>, column: impl Into<String>, op: CmpOp, value: Value) -> Self {
        Predicate {
            table: table.into(),
            column: column.into(),
            op,
            value,
        }
    }
}

/// A conjunctive join/selection COUNT(*) query as three sets. Equality is
/// set equality, independent of the order anything was written in.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Query {
    pub tables: BTreeSet<String>,
    pub joins: BTreeSet<FkEdge>,
    pub predicates: BTreeSet<Predicate>,
}

impl Query {
    pub fn new(
        tables: impl IntoIterator<Item = String>,
        joins: impl IntoIterator<Item = FkEdge>,
        predicates: impl IntoIterator<Item = Predicate>,
    ) -> Self {
        Query {
            tables: tables.into_iter().collect(),
            joins: joins.into_iter().collect(),
            predicates: predicates.into_iter().collect(),
        }
    }

    pub fn single_table(table: &str) -> Self {
        Query {
            tables: BTreeSet::from([table.to_string()]),
            ..Query::default()
        }
    }

    pub fn predicates_on<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| p.table == table)
    }

    /// Checks the query against `schema`: known symbols, joins that are
    /// schema FK edges forming a spanning tree over the tables, kind-correct
    /// literals and at most one predicate per (column, operator).
    pub fn validate(&self, schema: &SchemaCatalog) -> Result<(), QueryError> {
        if self.tables.is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        for t in &self.tables {
            if schema.table(t).is_none() {
                return Err(QueryError::UnknownTable(t.clone()));
            }
        }
        for j in &self.joins {
            if !schema.fk_edges.contains(j) {
                return Err(QueryError::NonFkJoin(edge_text(j)));
            }
            if !self.tables.contains(&j.child_table) || !self.tables.contains(&j.parent_table) {
                return Err(QueryError::JoinOutsideQuery(edge_text(j)));
            }
        }
        if self.joins.len() + 1 != self.tables.len() || !self.joins_connect_tables() {
            return Err(QueryError::Disconnected);
        }
        let mut seen = BTreeMap::new();
        for p in &self.predicates {
            if !self.tables.contains(&p.table) {
                return Err(QueryError::UnknownTable(p.table.clone()));
            }
            let col = schema
                .table(&p.table)
                .and_then(|t| t.column(&p.column))
                .ok_or_else(|| QueryError::UnknownColumn {
                    table: p.table.clone(),
                    column: p.column.clone(),
                })?;
            if p.value.kind() != col.kind {
                return Err(QueryError::LiteralKind {
                    table: p.table.clone(),
                    column: p.column.clone(),
                    expected: col.kind,
                });
            }
            if seen.insert((&p.table, &p.column, p.op), ()).is_some() {
                return Err(QueryError::DuplicatePredicate {
                    table: p.table.clone(),
                    column: p.column.clone(),
                    op: p.op,
                });
            }
        }
        Ok(())
    }

    fn joins_connect_tables(&self) -> bool {
        let first = self.tables.iter().next().expect("non-empty");
        let mut seen = BTreeSet::from([first.as_str()]);
        let mut stack = vec![first.as_str()];
        while let Some(t) = stack.pop() {
            for j in &self.joins {
                if let Some(o) = j.other(t) {
                    if seen.insert(o) {
                        stack.push(o);
                    }
                }
            }
        }
        seen.len() == self.tables.len()
    }
}

pub(crate) fn edge_text(e: &FkEdge) -> String {
    format!(
        "{}.{} = {}.{}",
        e.child_table, e.child_column, e.parent_table, e.parent_column
    )
}
