//! Encoding vocabulary and query featurization.
//!
//! A query becomes three sets of feature vectors:
//!
//! - tables: one-hot table id followed by the table's qualifying-sample
//!   bitmap (`T + s` entries),
//! - joins: one-hot join edge (`J` entries),
//! - predicates: one-hot column, one-hot operator and the min/max
//!   normalized literal (`C + 4` entries).
//!
//! [`FeaturizedQuery`] keeps these in index form; the network expands them
//! to dense rows when it assembles a batch.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::{Bitmap, ColumnKind, DataError, FkEdge, SampleTables, SchemaCatalog, TableStore, Value};
use crate::queryir::{CmpOp, Query};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Table,
    Join,
    Column,
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymbolKind::Table => "table",
            SymbolKind::Join => "join",
            SymbolKind::Column => "column",
        })
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{kind} {name} is not covered by this sketch")]
    UnknownSymbol { kind: SymbolKind, name: String },
    #[error("no training queries")]
    EmptyTrainingSet,
    #[error("every training query has cardinality 0, labels cannot be normalized")]
    DegenerateLabels,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry {
    pub table: String,
    pub column: String,
    pub kind: ColumnKind,
    pub min: f64,
    pub max: f64,
}

/// Frozen symbol-to-index maps plus the normalization constants. Indices
/// are positions in the sorted vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingVocabulary {
    tables: Vec<String>,
    joins: Vec<FkEdge>,
    columns: Vec<ColumnEntry>,
    label_log_max: f64,
    sample_size: usize,
}

/// Widths of the three feature sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub tables: usize,
    pub joins: usize,
    pub columns: usize,
    pub sample_size: usize,
}

impl FeatureDims {
    pub fn table_dim(&self) -> usize {
        self.tables + self.sample_size
    }

    pub fn join_dim(&self) -> usize {
        self.joins
    }

    pub fn predicate_dim(&self) -> usize {
        self.columns + CmpOp::ALL.len() + 1
    }
}

/// Builds the vocabulary over every table, FK edge and column of `schema`.
/// Column ranges come from full-table statistics; the label scale from the
/// largest training cardinality.
pub fn build_vocabulary(
    schema: &SchemaCatalog,
    store: &TableStore,
    cardinalities: &[u64],
    sample_size: usize,
) -> Result<EncodingVocabulary, FeatureError> {
    let max_card = cardinalities
        .iter()
        .copied()
        .max()
        .ok_or(FeatureError::EmptyTrainingSet)?;
    if max_card == 0 {
        return Err(FeatureError::DegenerateLabels);
    }
    let mut tables: Vec<String> = schema.table_names().map(str::to_string).collect();
    tables.sort();
    let mut joins = schema.fk_edges.clone();
    joins.sort();
    let mut columns = Vec::new();
    for t in &tables {
        let table = store.get_table(t)?;
        for col in table.columns() {
            let stats = col.stats();
            let (min, max) = match (&stats.min, &stats.max) {
                (Some(lo), Some(hi)) => (lo.as_f64(), hi.as_f64()),
                _ => (0.0, 0.0),
            };
            columns.push(ColumnEntry {
                table: t.clone(),
                column: col.name().to_string(),
                kind: col.kind(),
                min,
                max,
            });
        }
    }
    columns.sort_by(|a, b| (&a.table, &a.column).cmp(&(&b.table, &b.column)));
    Ok(EncodingVocabulary {
        tables,
        joins,
        columns,
        label_log_max: (max_card as f64).ln_1p(),
        sample_size,
    })
}

impl EncodingVocabulary {
    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            tables: self.tables.len(),
            joins: self.joins.len(),
            columns: self.columns.len(),
            sample_size: self.sample_size,
        }
    }

    pub fn label_log_max(&self) -> f64 {
        self.label_log_max
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn tables(&self) -> &[String] {
        &self.tables
    }

    pub fn joins(&self) -> &[FkEdge] {
        &self.joins
    }

    pub fn columns(&self) -> &[ColumnEntry] {
        &self.columns
    }

    pub fn table_index(&self, table: &str) -> Result<usize, FeatureError> {
        self.tables
            .binary_search_by(|t| t.as_str().cmp(table))
            .map_err(|_| FeatureError::UnknownSymbol {
                kind: SymbolKind::Table,
                name: table.to_string(),
            })
    }

    pub fn join_index(&self, edge: &FkEdge) -> Result<usize, FeatureError> {
        self.joins.binary_search(edge).map_err(|_| FeatureError::UnknownSymbol {
            kind: SymbolKind::Join,
            name: format!(
                "{}.{} = {}.{}",
                edge.child_table, edge.child_column, edge.parent_table, edge.parent_column
            ),
        })
    }

    pub fn column_index(&self, table: &str, column: &str) -> Result<usize, FeatureError> {
        self.columns
            .binary_search_by(|c| (c.table.as_str(), c.column.as_str()).cmp(&(table, column)))
            .map_err(|_| FeatureError::UnknownSymbol {
                kind: SymbolKind::Column,
                name: format!("{table}.{column}"),
            })
    }

    pub fn column(&self, table: &str, column: &str) -> Result<&ColumnEntry, FeatureError> {
        Ok(&self.columns[self.column_index(table, column)?])
    }

    pub fn normalize_label(&self, card: f64) -> f64 {
        normalize_label(self.label_log_max, card)
    }

    pub fn denormalize_label(&self, y: f64) -> f64 {
        denormalize_label(self.label_log_max, y)
    }

    /// Human-readable JSON with explicit symbol-to-index maps.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let tables: BTreeMap<&str, usize> = self.tables.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let joins: BTreeMap<String, usize> = self
            .joins
            .iter()
            .enumerate()
            .map(|(i, e)| {
                (
                    format!(
                        "{}.{} = {}.{}",
                        e.child_table, e.child_column, e.parent_table, e.parent_column
                    ),
                    i,
                )
            })
            .collect();
        let columns: BTreeMap<String, serde_json::Value> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    format!("{}.{}", c.table, c.column),
                    serde_json::json!({ "index": i, "kind": c.kind, "min": c.min, "max": c.max }),
                )
            })
            .collect();
        let ops: BTreeMap<&str, usize> = CmpOp::ALL.iter().map(|o| (o.symbol(), o.index())).collect();
        serde_json::json!({
            "tables": tables,
            "joins": joins,
            "columns": columns,
            "operators": ops,
            "label_log_max": self.label_log_max,
            "sample_size": self.sample_size,
            "counts": {
                "tables": self.tables.len(),
                "joins": self.joins.len(),
                "columns": self.columns.len(),
                "operators": CmpOp::ALL.len(),
            },
        })
    }
}

/// `ln(1 + card) / label_log_max`.
pub fn normalize_label(label_log_max: f64, card: f64) -> f64 {
    card.max(0.0).ln_1p() / label_log_max
}

/// Inverse of [`normalize_label`], clamped at zero.
pub fn denormalize_label(label_log_max: f64, y: f64) -> f64 {
    (y * label_log_max).exp_m1().max(0.0)
}

/// Min/max normalized literal and whether it had to be clamped into
/// `[0, 1]`.
pub fn normalize_literal(entry: &ColumnEntry, value: &Value) -> (f64, bool) {
    if entry.max <= entry.min {
        return (0.5, value.as_f64() != entry.min);
    }
    let x = (value.as_f64() - entry.min) / (entry.max - entry.min);
    if (0.0..=1.0).contains(&x) {
        (x, false)
    } else {
        (x.clamp(0.0, 1.0), true)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableFeature {
    pub index: usize,
    pub bitmap: Bitmap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredicateFeature {
    pub column: usize,
    pub op: usize,
    pub value: f64,
}

/// A query in index form. Sets are kept in query order; the network treats
/// them as unordered.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturizedQuery {
    pub tables: Vec<TableFeature>,
    pub joins: Vec<usize>,
    pub predicates: Vec<PredicateFeature>,
    /// Some literal lay outside its column's range and was clamped.
    pub clamped: bool,
}

impl FeaturizedQuery {
    /// Some table has no qualifying sample tuple.
    pub fn has_empty_bitmap(&self) -> bool {
        self.tables.iter().any(|t| t.bitmap.is_all_zero())
    }

    /// Dense table vector `i`: one-hot table id then bitmap.
    pub fn table_vector(&self, dims: &FeatureDims, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dims.table_dim()];
        let t = &self.tables[i];
        v[t.index] = 1.0;
        for slot in t.bitmap.iter_ones() {
            v[dims.tables + slot] = 1.0;
        }
        v
    }

    pub fn join_vector(&self, dims: &FeatureDims, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dims.join_dim()];
        v[self.joins[i]] = 1.0;
        v
    }

    /// Dense predicate vector `i`: one-hot column, one-hot operator, value.
    pub fn predicate_vector(&self, dims: &FeatureDims, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dims.predicate_dim()];
        let p = &self.predicates[i];
        v[p.column] = 1.0;
        v[dims.columns + p.op] = 1.0;
        v[dims.columns + CmpOp::ALL.len()] = p.value;
        v
    }
}

/// Featurizes `query` against the sketch vocabulary. Tables without
/// predicates get an all-ones bitmap over their valid sample slots.
pub fn featurize(
    vocab: &EncodingVocabulary,
    query: &Query,
    samples: &SampleTables,
) -> Result<FeaturizedQuery, FeatureError> {
    let mut tables = Vec::with_capacity(query.tables.len());
    for t in &query.tables {
        let index = vocab.table_index(t)?;
        let preds: Vec<_> = query.predicates_on(t).collect();
        let bitmap = samples.bitmap(t, &preds)?;
        tables.push(TableFeature { index, bitmap });
    }
    let joins = query
        .joins
        .iter()
        .map(|j| vocab.join_index(j))
        .collect::<Result<Vec<_>, _>>()?;
    let mut clamped = false;
    let mut predicates = Vec::with_capacity(query.predicates.len());
    for p in &query.predicates {
        let column = vocab.column_index(&p.table, &p.column)?;
        let (value, c) = normalize_literal(&vocab.columns[column], &p.value);
        clamped |= c;
        predicates.push(PredicateFeature {
            column,
            op: p.op.index(),
            value,
        });
    }
    Ok(FeaturizedQuery {
        tables,
        joins,
        predicates,
        clamped,
    })
}

/// A featurized training query with its normalized label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub features: FeaturizedQuery,
    pub label: f64,
    pub cardinality: u64,
}

impl LabeledSample {
    pub fn new(vocab: &EncodingVocabulary, features: FeaturizedQuery, cardinality: u64) -> Self {
        LabeledSample {
            label: vocab.normalize_label(cardinality as f64),
            features,
            cardinality,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{conjunctive_bitmap, draw_samples, SampleSet};
    use crate::queryir::{parse_query, GeneratorConfig, Predicate, QueryGenerator};
    use crate::testutil::star_store;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(s: usize) -> (TableStore, SampleSet, SampleTables, EncodingVocabulary) {
        let store = star_store();
        let samples = draw_samples(&store, s, 7);
        let tables = SampleTables::materialize(&store, &samples).unwrap();
        let vocab = build_vocabulary(store.schema(), &store, &[0, 50, 3], s).unwrap();
        (store, samples, tables, vocab)
    }

    #[test]
    fn counts_follow_the_schema() {
        let (_, _, _, vocab) = setup(8);
        let dims = vocab.dims();
        assert_eq!((dims.tables, dims.joins, dims.columns), (4, 3, 11));
        assert_eq!(dims.table_dim(), 12);
        assert_eq!(dims.predicate_dim(), 15);
        assert!((vocab.label_log_max() - 51f64.ln()).abs() < 1e-12);
        let json = vocab.to_debug_json();
        assert_eq!(json["tables"]["a"], 0);
        assert_eq!(json["counts"]["operators"], 3);
    }

    #[test]
    fn vocabulary_is_deterministic() {
        let (store, _, _, vocab) = setup(8);
        let again = build_vocabulary(store.schema(), &store, &[3, 50], 8).unwrap();
        assert_eq!(vocab, again);
    }

    #[test]
    fn degenerate_training_sets() {
        let store = star_store();
        assert!(matches!(
            build_vocabulary(store.schema(), &store, &[0, 0], 8),
            Err(FeatureError::DegenerateLabels)
        ));
        assert!(matches!(
            build_vocabulary(store.schema(), &store, &[], 8),
            Err(FeatureError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn literal_normalization() {
        let entry = ColumnEntry {
            table: "t".into(),
            column: "c".into(),
            kind: ColumnKind::Integer,
            min: 0.0,
            max: 200.0,
        };
        assert_eq!(normalize_literal(&entry, &Value::Int(0)), (0.0, false));
        assert_eq!(normalize_literal(&entry, &Value::Int(200)), (1.0, false));
        assert_eq!(normalize_literal(&entry, &Value::Int(50)), (0.25, false));
        assert_eq!(normalize_literal(&entry, &Value::Int(250)), (1.0, true));
        assert_eq!(normalize_literal(&entry, &Value::Int(-1)), (0.0, true));
        let flat = ColumnEntry { max: 0.0, ..entry };
        assert_eq!(normalize_literal(&flat, &Value::Int(0)).0, 0.5);
    }

    #[test]
    fn label_normalization() {
        let l = 12345f64.ln_1p();
        assert_eq!(normalize_label(l, 12345.0), 1.0);
        assert_eq!(normalize_label(l, 0.0), 0.0);
        let back = denormalize_label(l, normalize_label(l, 12345.0));
        assert!((back - 12345.0).abs() / 12345.0 < 1e-6);
        assert_eq!(denormalize_label(l, -0.5), 0.0);
    }

    proptest! {
        #[test]
        fn label_round_trip(card in 0u64..10_000_000_000, max in 1u64..10_000_000_000) {
            let l = (max as f64).ln_1p();
            let y = normalize_label(l, card as f64);
            let back = denormalize_label(l, y);
            prop_assert!((back - card as f64).abs() <= 1e-6 * (card as f64).max(1.0));
        }

        #[test]
        fn label_is_monotone(a in 0u64..1_000_000, b in 0u64..1_000_000) {
            let l = 1e6f64.ln_1p();
            let (ya, yb) = (normalize_label(l, a as f64), normalize_label(l, b as f64));
            prop_assert_eq!(a.cmp(&b), ya.partial_cmp(&yb).unwrap());
        }
    }

    #[test]
    fn single_table_without_predicates() {
        let (store, _, tables, vocab) = setup(8);
        let f = featurize(&vocab, &Query::single_table("a"), &tables).unwrap();
        assert_eq!(f.tables.len(), 1);
        assert!(f.joins.is_empty() && f.predicates.is_empty());
        let v = f.table_vector(&vocab.dims(), 0);
        // a is the first table; 8 of its 10 rows are sampled
        assert_eq!(v[..4], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(v[4..], [1.0; 8]);
        let _ = store;
    }

    #[test]
    fn three_table_query_shapes() {
        let (store, _, tables, vocab) = setup(8);
        let q = parse_query(
            "SELECT COUNT(*) FROM f, a, b WHERE f.a_id = a.id AND f.b_id = b.id AND a.v = 1 AND f.x < 3",
            store.schema(),
        )
        .unwrap();
        let f = featurize(&vocab, &q, &tables).unwrap();
        assert_eq!((f.tables.len(), f.joins.len(), f.predicates.len()), (3, 2, 2));
        let dims = vocab.dims();
        let p = f.predicate_vector(&dims, 0);
        assert_eq!(p.len(), dims.predicate_dim());
        assert_eq!(p[..dims.columns].iter().sum::<f64>(), 1.0);
        assert_eq!(p[dims.columns..dims.columns + 3].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn zero_tuple_predicates_still_featurize() {
        let (store, _, tables, vocab) = setup(8);
        let q = Query::new(
            ["c".to_string()],
            [],
            [Predicate::new("c", "w", CmpOp::Gt, Value::Int(1000))],
        );
        q.validate(store.schema()).unwrap();
        let f = featurize(&vocab, &q, &tables).unwrap();
        assert!(f.has_empty_bitmap());
        assert!(f.clamped);
    }

    #[test]
    fn unknown_symbols() {
        let (store, _, tables, _) = setup(8);
        let sub = store.schema().subset(&["f".into(), "a".into()]).unwrap();
        let vocab = build_vocabulary(&sub, &store, &[5], 8).unwrap();
        let err = featurize(&vocab, &Query::single_table("b"), &tables).unwrap_err();
        assert!(matches!(
            err,
            FeatureError::UnknownSymbol {
                kind: SymbolKind::Table,
                ..
            }
        ));
    }

    #[test]
    fn features_match_store_bitmaps_and_ranges() {
        let (store, samples, tables, vocab) = setup(6);
        let dims = vocab.dims();
        let cfg = GeneratorConfig {
            max_joins: 3,
            ..GeneratorConfig::default()
        };
        let g = QueryGenerator::new(store.schema(), &store, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let q = g.generate(&mut rng);
            let f = featurize(&vocab, &q, &tables).unwrap();
            for (i, (name, feat)) in q.tables.iter().zip(&f.tables).enumerate() {
                let preds: Vec<_> = q.predicates_on(name).collect();
                let expect = conjunctive_bitmap(&store, &samples, name, &preds).unwrap();
                assert_eq!(feat.bitmap, expect);
                let v = f.table_vector(&dims, i);
                assert_eq!(v[..dims.tables].iter().sum::<f64>(), 1.0);
                assert!(v.iter().all(|x| *x == 0.0 || *x == 1.0));
            }
            for i in 0..f.joins.len() {
                assert_eq!(f.join_vector(&dims, i).iter().sum::<f64>(), 1.0);
            }
            for i in 0..f.predicates.len() {
                let v = f.predicate_vector(&dims, i);
                assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }
}
