//! Columnar tables with per-column statistics.

use std::collections::{BTreeMap, HashSet};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnDef, SchemaCatalog, TableDef};
use super::value::{ColumnKind, Value};
use super::DataError;
use crate::queryir::CmpOp;

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Date(Vec<i32>),
}

impl ColumnData {
    pub fn empty(kind: ColumnKind) -> Self {
        match kind {
            ColumnKind::Integer => ColumnData::Int(Vec::new()),
            ColumnKind::Float => ColumnData::Float(Vec::new()),
            ColumnKind::Date => ColumnData::Date(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int(v) => v.len(),
            ColumnData::Float(v) => v.len(),
            ColumnData::Date(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Int(_) => ColumnKind::Integer,
            ColumnData::Float(_) => ColumnKind::Float,
            ColumnData::Date(_) => ColumnKind::Date,
        }
    }

    fn value(&self, row: usize) -> Value {
        match self {
            ColumnData::Int(v) => Value::Int(v[row]),
            ColumnData::Float(v) => Value::Float(v[row]),
            ColumnData::Date(v) => Value::Date(v[row]),
        }
    }

    /// Appends `value`, or the kind's zero placeholder for `None`.
    fn push(&mut self, value: Option<Value>) -> bool {
        match (self, value) {
            (ColumnData::Int(v), Some(Value::Int(x))) => v.push(x),
            (ColumnData::Float(v), Some(Value::Float(x))) => v.push(x),
            (ColumnData::Date(v), Some(Value::Date(x))) => v.push(x),
            (ColumnData::Int(v), None) => v.push(0),
            (ColumnData::Float(v), None) => v.push(0.0),
            (ColumnData::Date(v), None) => v.push(0),
            _ => return false,
        }
        true
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub null_count: usize,
    pub distinct: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    def: ColumnDef,
    data: ColumnData,
    /// Set bits mark null rows; absent when the column has no nulls.
    nulls: Option<BitVec>,
    stats: ColumnStats,
}

impl Column {
    pub fn new(def: ColumnDef, data: ColumnData, nulls: Option<BitVec>) -> Result<Self, DataError> {
        if data.kind() != def.kind {
            return Err(DataError::KindMismatch {
                column: def.name.clone(),
                expected: def.kind,
            });
        }
        let nulls = nulls.filter(|n| n.any());
        if let Some(n) = &nulls {
            if n.len() != data.len() {
                return Err(DataError::RaggedTable(def.name.clone()));
            }
        }
        let mut column = Column {
            def,
            data,
            nulls,
            stats: ColumnStats::default(),
        };
        column.stats = column.compute_stats();
        Ok(column)
    }

    fn compute_stats(&self) -> ColumnStats {
        let mut stats = ColumnStats::default();
        let mut seen = HashSet::new();
        for row in 0..self.len() {
            match self.get(row) {
                None => stats.null_count += 1,
                Some(v) => {
                    if stats.min.is_none_or(|m| v < m) {
                        stats.min = Some(v);
                    }
                    if stats.max.is_none_or(|m| v > m) {
                        stats.max = Some(v);
                    }
                    seen.insert(v);
                }
            }
        }
        stats.distinct = seen.len();
        stats
    }

    pub fn def(&self) -> &ColumnDef {
        &self.def
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.def.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn stats(&self) -> &ColumnStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_null(&self, row: usize) -> bool {
        self.nulls.as_ref().is_some_and(|n| n[row])
    }

    pub fn null_mask(&self) -> Option<&BitSlice> {
        self.nulls.as_deref()
    }

    pub fn get(&self, row: usize) -> Option<Value> {
        if self.is_null(row) {
            None
        } else {
            Some(self.data.value(row))
        }
    }

    /// Evaluates `column op literal` on `row`. Nulls never qualify.
    pub fn satisfies(&self, row: usize, op: CmpOp, literal: &Value) -> bool {
        if self.is_null(row) {
            return false;
        }
        let ord = match (&self.data, literal) {
            (ColumnData::Int(v), Value::Int(x)) => v[row].cmp(x),
            (ColumnData::Float(v), Value::Float(x)) => v[row].total_cmp(x),
            (ColumnData::Date(v), Value::Date(x)) => v[row].cmp(x),
            _ => return false,
        };
        op.accepts(ord)
    }

    /// Non-null values in row order.
    pub fn values(&self) -> impl Iterator<Item = Value> + '_ {
        (0..self.len()).filter_map(|r| self.get(r))
    }

    fn take(&self, rows: &[u32]) -> Column {
        let mut builder = ColumnBuilder::new(self.def.clone());
        for &r in rows {
            builder.push(self.get(r as usize)).expect("same kind");
        }
        builder.finish().expect("same kind")
    }
}

/// Accumulates typed values for one column.
pub struct ColumnBuilder {
    def: ColumnDef,
    data: ColumnData,
    nulls: BitVec,
}

impl ColumnBuilder {
    pub fn new(def: ColumnDef) -> Self {
        ColumnBuilder {
            data: ColumnData::empty(def.kind),
            def,
            nulls: BitVec::new(),
        }
    }

    pub fn push(&mut self, value: Option<Value>) -> Result<(), DataError> {
        if !self.data.push(value) {
            return Err(DataError::KindMismatch {
                column: self.def.name.clone(),
                expected: self.def.kind,
            });
        }
        self.nulls.push(value.is_none());
        Ok(())
    }

    pub fn finish(self) -> Result<Column, DataError> {
        Column::new(self.def, self.data, Some(self.nulls))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    def: TableDef,
    columns: Vec<Column>,
    row_count: usize,
}

impl Table {
    pub fn new(def: TableDef, columns: Vec<Column>) -> Result<Self, DataError> {
        if columns.len() != def.columns.len() || columns.iter().zip(&def.columns).any(|(c, d)| c.def() != d) {
            return Err(DataError::MissingColumn {
                table: def.name.clone(),
                column: def
                    .columns
                    .iter()
                    .find(|d| !columns.iter().any(|c| c.def() == *d))
                    .map(|d| d.name.clone())
                    .unwrap_or_default(),
            });
        }
        let row_count = columns.first().map_or(0, Column::len);
        if columns.iter().any(|c| c.len() != row_count) {
            return Err(DataError::RaggedTable(def.name.clone()));
        }
        Ok(Table {
            def,
            columns,
            row_count,
        })
    }

    /// Builds a table from row-major values, mostly for tests and generators.
    pub fn from_rows(def: TableDef, rows: &[Vec<Option<Value>>]) -> Result<Self, DataError> {
        let mut builders: Vec<_> = def.columns.iter().cloned().map(ColumnBuilder::new).collect();
        for row in rows {
            if row.len() != builders.len() {
                return Err(DataError::RaggedTable(def.name.clone()));
            }
            for (b, v) in builders.iter_mut().zip(row) {
                b.push(*v)?;
            }
        }
        let columns = builders
            .into_iter()
            .map(ColumnBuilder::finish)
            .collect::<Result<_, _>>()?;
        Table::new(def, columns)
    }

    pub fn def(&self) -> &TableDef {
        &self.def
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    /// A new table holding `rows` in the given order.
    pub fn take_rows(&self, rows: &[u32]) -> Table {
        Table {
            def: self.def.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            row_count: rows.len(),
        }
    }
}

/// All tables of a catalog, immutable after construction.
#[derive(Clone, Debug)]
pub struct TableStore {
    schema: SchemaCatalog,
    tables: BTreeMap<String, Table>,
}

impl TableStore {
    pub fn new(schema: SchemaCatalog, tables: Vec<Table>) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        for t in tables {
            let def = schema
                .table(t.name())
                .ok_or_else(|| DataError::UnknownTable(t.name().to_string()))?;
            if def != t.def() {
                return Err(DataError::Config(format!(
                    "table {} does not match its schema definition",
                    t.name()
                )));
            }
            let name = t.name().to_string();
            if map.insert(name.clone(), t).is_some() {
                return Err(DataError::DuplicateTable(name));
            }
        }
        if let Some(missing) = schema.table_names().find(|n| !map.contains_key(*n)) {
            return Err(DataError::MissingTable(missing.to_string()));
        }
        Ok(TableStore { schema, tables: map })
    }

    pub fn schema(&self) -> &SchemaCatalog {
        &self.schema
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    pub fn get_table(&self, name: &str) -> Result<&Table, DataError> {
        self.table(name)
            .ok_or_else(|| DataError::UnknownTable(name.to_string()))
    }

    pub fn get_column(&self, table: &str, column: &str) -> Result<&Column, DataError> {
        self.get_table(table)?
            .column(column)
            .ok_or_else(|| DataError::UnknownColumn {
                table: table.to_string(),
                column: column.to_string(),
            })
    }
}
