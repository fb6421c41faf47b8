//! Store-free baseline estimators: sample scale-up and per-column
//! histograms under independence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SketchError;
use crate::datastore::{join_cardinality, EquiDepthHistogram, SampleTables, SchemaCatalog, TableStore};
use crate::featurizer::SymbolKind;
use crate::queryir::Query;

/// Selectivity assumed for a table none of whose sampled rows qualify.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroTupleGuess {
    /// `1 / (valid sample rows + 1)`.
    #[default]
    InverseSamplePlusOne,
    Fixed {
        selectivity: f64,
    },
}

impl ZeroTupleGuess {
    pub fn selectivity(self, valid: usize) -> f64 {
        match self {
            ZeroTupleGuess::InverseSamplePlusOne => 1.0 / (valid as f64 + 1.0),
            ZeroTupleGuess::Fixed { selectivity } => selectivity,
        }
    }
}

/// Statistics captured at creation time so the baselines never need the
/// table store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    /// Unfiltered join size per connected table set, keyed by the sorted
    /// table names joined with `,`.
    pub join_cardinalities: BTreeMap<String, u64>,
    /// Keyed by `table.column`.
    pub histograms: BTreeMap<String, EquiDepthHistogram>,
    pub zero_tuple_guess: ZeroTupleGuess,
}

pub fn join_key<'a>(tables: impl IntoIterator<Item = &'a String>) -> String {
    let sorted: BTreeSet<&String> = tables.into_iter().collect();
    sorted.into_iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

fn column_key(table: &str, column: &str) -> String {
    format!("{table}.{column}")
}

/// Connected subsets of `schema`'s tables with at most `max_tables`
/// members.
pub fn connected_subsets(schema: &SchemaCatalog, max_tables: usize) -> Vec<BTreeSet<String>> {
    let names: Vec<String> = schema.table_names().map(str::to_string).collect();
    let mut seen: BTreeSet<BTreeSet<String>> = BTreeSet::new();
    let mut frontier: Vec<BTreeSet<String>> = names.iter().map(|n| BTreeSet::from([n.clone()])).collect();
    while let Some(set) = frontier.pop() {
        if !seen.insert(set.clone()) || set.len() >= max_tables {
            continue;
        }
        for e in &schema.fk_edges {
            let grow = match (set.contains(&e.child_table), set.contains(&e.parent_table)) {
                (true, false) => &e.parent_table,
                (false, true) => &e.child_table,
                _ => continue,
            };
            let mut next = set.clone();
            next.insert(grow.clone());
            if !seen.contains(&next) {
                frontier.push(next);
            }
        }
    }
    seen.into_iter().collect()
}

impl BaselineStats {
    pub fn build(
        store: &TableStore,
        schema: &SchemaCatalog,
        buckets: usize,
        max_tables: usize,
        zero_tuple_guess: ZeroTupleGuess,
    ) -> Result<Self, SketchError> {
        let mut join_cardinalities = BTreeMap::new();
        for set in connected_subsets(schema, max_tables) {
            join_cardinalities.insert(join_key(&set), join_cardinality(store, &set)?);
        }
        let mut histograms = BTreeMap::new();
        for name in schema.table_names() {
            for col in store.get_table(name)?.columns() {
                histograms.insert(column_key(name, col.name()), EquiDepthHistogram::build(col, buckets));
            }
        }
        Ok(BaselineStats {
            join_cardinalities,
            histograms,
            zero_tuple_guess,
        })
    }

    pub fn join_cardinality(&self, tables: &BTreeSet<String>) -> Result<u64, SketchError> {
        let key = join_key(tables);
        self.join_cardinalities
            .get(&key)
            .copied()
            .ok_or(SketchError::UnknownSymbol {
                kind: SymbolKind::Join,
                name: key,
            })
    }

    /// Product of per-table sample selectivities times the unfiltered join
    /// size. The query must already be validated.
    pub fn sampling_estimate(&self, samples: &SampleTables, query: &Query) -> Result<f64, SketchError> {
        let mut card = self.join_cardinality(&query.tables)? as f64;
        for t in &query.tables {
            let preds: Vec<_> = query.predicates_on(t).collect();
            if preds.is_empty() {
                continue;
            }
            let bitmap = samples.bitmap(t, &preds)?;
            let valid = bitmap.valid();
            if valid == 0 {
                return Ok(0.0);
            }
            let k = bitmap.count_ones();
            card *= if k == 0 {
                self.zero_tuple_guess.selectivity(valid)
            } else {
                k as f64 / valid as f64
            };
        }
        Ok(card)
    }

    /// Product of per-predicate histogram selectivities times the
    /// unfiltered join size. The query must already be validated.
    pub fn independence_estimate(&self, query: &Query) -> Result<f64, SketchError> {
        let mut card = self.join_cardinality(&query.tables)? as f64;
        for p in &query.predicates {
            let key = column_key(&p.table, &p.column);
            let hist = self.histograms.get(&key).ok_or(SketchError::UnknownSymbol {
                kind: SymbolKind::Column,
                name: key,
            })?;
            card *= hist.selectivity(p.op, p.value.as_f64());
        }
        Ok(card)
    }
}
