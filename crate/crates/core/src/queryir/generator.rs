//! Random training-query generator.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::query::{CmpOp, Predicate, Query};
use super::QueryError;
use crate::datastore::{ColumnKind, FkEdge, SchemaCatalog, TableStore, Value};

const MAX_WALK_ATTEMPTS: usize = 100;

/// Where predicate literals come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiteralSource {
    /// A uniformly chosen non-null value of the column.
    #[default]
    DataValues,
    /// Uniform between the column's minimum and maximum.
    UniformInRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub max_joins: usize,
    pub max_predicates_per_table: usize,
    /// Relative weights of `=`, `<`, `>`.
    pub op_weights: [f64; 3],
    pub literal_source: LiteralSource,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_joins: 2,
            max_predicates_per_table: 2,
            op_weights: [1.0, 1.0, 1.0],
            literal_source: LiteralSource::DataValues,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), QueryError> {
        if self.max_predicates_per_table < 1 {
            return Err(QueryError::InvalidGenerator(
                "max_predicates_per_table must be at least 1".into(),
            ));
        }
        if self.op_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.op_weights.iter().sum::<f64>() <= 0.0 {
            return Err(QueryError::InvalidGenerator(
                "op_weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}

struct PredicateColumn {
    name: String,
    kind: ColumnKind,
    values: Vec<Value>,
    min: f64,
    max: f64,
}

struct TableInfo {
    name: String,
    columns: Vec<PredicateColumn>,
}

/// Generator bound to a table subset. Construction precomputes the
/// candidate predicate columns and their values; [`QueryGenerator::generate`]
/// is then cheap and deterministic in the RNG it is given.
pub struct QueryGenerator {
    config: GeneratorConfig,
    tables: Vec<TableInfo>,
    edges: Vec<FkEdge>,
    ops: WeightedIndex<f64>,
}

impl QueryGenerator {
    /// `schema` selects the tables queries may touch. Key columns are
    /// never used in predicates.
    pub fn new(schema: &SchemaCatalog, store: &TableStore, config: &GeneratorConfig) -> Result<Self, QueryError> {
        config.validate()?;
        let names: BTreeSet<String> = schema.table_names().map(str::to_string).collect();
        if names.is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        if !schema.is_connected(&names) {
            return Err(QueryError::Disconnected);
        }
        let mut tables = Vec::new();
        for name in &names {
            let table = store
                .table(name)
                .ok_or_else(|| QueryError::UnknownTable(name.clone()))?;
            let mut columns = Vec::new();
            for col in table.columns() {
                if schema.is_key_column(name, col.name()) {
                    continue;
                }
                let values: Vec<Value> = col.values().collect();
                let (Some(min), Some(max)) = (&col.stats().min, &col.stats().max) else {
                    continue;
                };
                columns.push(PredicateColumn {
                    name: col.name().to_string(),
                    kind: col.kind(),
                    min: min.as_f64(),
                    max: max.as_f64(),
                    values,
                });
            }
            tables.push(TableInfo {
                name: name.clone(),
                columns,
            });
        }
        let edges = schema.induced_edges(&names).cloned().collect();
        let ops = WeightedIndex::new(config.op_weights).map_err(|e| QueryError::InvalidGenerator(e.to_string()))?;
        Ok(QueryGenerator {
            config: config.clone(),
            tables,
            edges,
            ops,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Largest join count this generator can produce.
    pub fn join_limit(&self) -> usize {
        self.config.max_joins.min(self.tables.len() - 1)
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Query {
        let joins_wanted = rng.random_range(0..=self.join_limit());
        let (tables, joins) = self.walk(joins_wanted, rng);

        let mut predicates = Vec::new();
        for info in self.tables.iter().filter(|t| tables.contains(&t.name)) {
            let wanted = rng.random_range(0..=self.config.max_predicates_per_table);
            let count = wanted.min(info.columns.len());
            for ci in rand::seq::index::sample(rng, info.columns.len(), count) {
                let col = &info.columns[ci];
                let op = CmpOp::ALL[self.ops.sample(rng)];
                predicates.push(Predicate::new(&info.name, &col.name, op, self.literal(col, rng)));
            }
        }
        Query::new(tables, joins, predicates)
    }

    /// Uniform random walk over FK edges. Every step picks uniformly among
    /// edges leaving the current table set. Dead ends restart from a fresh
    /// table; after the attempt cap the longest walk found is used.
    fn walk<R: Rng + ?Sized>(&self, joins_wanted: usize, rng: &mut R) -> (BTreeSet<String>, Vec<FkEdge>) {
        let mut best: Option<(BTreeSet<String>, Vec<FkEdge>)> = None;
        for _ in 0..MAX_WALK_ATTEMPTS {
            let start = &self.tables[rng.random_range(0..self.tables.len())].name;
            let mut tables = BTreeSet::from([start.clone()]);
            let mut joins = Vec::new();
            while joins.len() < joins_wanted {
                let frontier: Vec<&FkEdge> = self
                    .edges
                    .iter()
                    .filter(|e| tables.contains(&e.child_table) != tables.contains(&e.parent_table))
                    .collect();
                if frontier.is_empty() {
                    break;
                }
                let edge = frontier[rng.random_range(0..frontier.len())];
                tables.insert(edge.child_table.clone());
                tables.insert(edge.parent_table.clone());
                joins.push(edge.clone());
            }
            let done = joins.len() == joins_wanted;
            if best.as_ref().is_none_or(|(_, b)| b.len() < joins.len()) {
                best = Some((tables, joins));
            }
            if done {
                break;
            }
        }
        best.expect("at least one attempt")
    }

    fn literal<R: Rng + ?Sized>(&self, col: &PredicateColumn, rng: &mut R) -> Value {
        match self.config.literal_source {
            LiteralSource::DataValues => col.values[rng.random_range(0..col.values.len())],
            LiteralSource::UniformInRange => match col.kind {
                ColumnKind::Integer => Value::Int(rng.random_range(col.min as i64..=col.max as i64)),
                ColumnKind::Date => Value::Date(rng.random_range(col.min as i32..=col.max as i32)),
                ColumnKind::Float if col.min < col.max => Value::Float(rng.random_range(col.min..=col.max)),
                ColumnKind::Float => Value::Float(col.min),
            },
        }
    }
}

/// One-shot convenience wrapper around [`QueryGenerator`].
pub fn generate_query<R: Rng + ?Sized>(
    schema: &SchemaCatalog,
    store: &TableStore,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<Query, QueryError> {
    Ok(QueryGenerator::new(schema, store, config)?.generate(rng))
}
