//! Exact COUNT(*) executor for conjunctive PK/FK join queries.
//!
//! The join graph of a valid query is a tree, so the count is computed by
//! aggregating per-row weights bottom-up along the tree: every table hashes
//! its subtree weights by join key and its parent probes the map. The root is
//! the largest table so it is only ever probed, never hashed.

use std::collections::{BTreeSet, HashMap};

use super::schema::FkEdge;
use super::table::{Table, TableStore};
use super::value::Value;
use super::DataError;
use crate::queryir::{Predicate, Query};

/// Exact result size of `query` over `store`.
pub fn true_cardinality(store: &TableStore, query: &Query) -> Result<u64, DataError> {
    query
        .validate(store.schema())
        .map_err(|e| DataError::InvalidQuery(e.to_string()))?;

    let mut scans = Vec::with_capacity(query.tables.len());
    for name in &query.tables {
        let table = store.get_table(name)?;
        let preds: Vec<&Predicate> = query.predicates_on(name).collect();
        scans.push(Scan {
            table,
            rows: filter_rows(table, &preds)?,
        });
    }
    if scans.iter().any(|s| s.rows.is_empty()) {
        return Ok(0);
    }

    let root = (0..scans.len())
        .max_by(|&a, &b| {
            scans[a]
                .table
                .row_count()
                .cmp(&scans[b].table.row_count())
                .then_with(|| scans[b].table.name().cmp(scans[a].table.name()))
        })
        .expect("at least one table");
    let edges: Vec<&FkEdge> = query.joins.iter().collect();
    let weights = subtree_weights(&scans, &edges, root, None)?;
    let total: u128 = weights.iter().sum();
    Ok(u64::try_from(total).unwrap_or(u64::MAX))
}

/// Size of the unfiltered join over `tables` using the schema's edges.
pub fn join_cardinality(store: &TableStore, tables: &BTreeSet<String>) -> Result<u64, DataError> {
    let joins = store.schema().induced_edges(tables).cloned().collect();
    let query = Query {
        tables: tables.clone(),
        joins,
        predicates: BTreeSet::new(),
    };
    true_cardinality(store, &query)
}

struct Scan<'a> {
    table: &'a Table,
    rows: Vec<u32>,
}

fn filter_rows(table: &Table, preds: &[&Predicate]) -> Result<Vec<u32>, DataError> {
    let mut cols = Vec::with_capacity(preds.len());
    for p in preds {
        cols.push((
            table.column(&p.column).ok_or_else(|| DataError::UnknownColumn {
                table: table.name().to_string(),
                column: p.column.clone(),
            })?,
            *p,
        ));
    }
    Ok((0..table.row_count() as u32)
        .filter(|&r| cols.iter().all(|(c, p)| c.satisfies(r as usize, p.op, &p.value)))
        .collect())
}

fn subtree_weights(
    scans: &[Scan<'_>],
    edges: &[&FkEdge],
    node: usize,
    via: Option<&FkEdge>,
) -> Result<Vec<u128>, DataError> {
    let scan = &scans[node];
    let name = scan.table.name();
    let mut weights = vec![1u128; scan.rows.len()];
    for edge in edges.iter().copied().filter(|e| e.touches(name) && Some(*e) != via) {
        let other_name = edge.other(name).expect("edge touches node");
        let child = scans
            .iter()
            .position(|s| s.table.name() == other_name)
            .expect("validated join endpoints");
        let child_weights = subtree_weights(scans, edges, child, Some(edge))?;

        let child_scan = &scans[child];
        let child_col = key_column(child_scan.table, edge)?;
        let mut by_key: HashMap<Value, u128> = HashMap::new();
        for (&row, &w) in child_scan.rows.iter().zip(&child_weights) {
            if w == 0 {
                continue;
            }
            if let Some(k) = child_col.get(row as usize) {
                *by_key.entry(k).or_default() += w;
            }
        }

        let own_col = key_column(scan.table, edge)?;
        for (&row, w) in scan.rows.iter().zip(weights.iter_mut()) {
            if *w == 0 {
                continue;
            }
            *w *= own_col
                .get(row as usize)
                .and_then(|k| by_key.get(&k).copied())
                .unwrap_or(0);
        }
    }
    Ok(weights)
}

fn key_column<'a>(table: &'a Table, edge: &FkEdge) -> Result<&'a super::table::Column, DataError> {
    let name = edge.column_of(table.name()).expect("edge touches table");
    table.column(name).ok_or_else(|| DataError::UnknownColumn {
        table: table.name().to_string(),
        column: name.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{ColumnDef, ColumnKind, SchemaCatalog, TableDef};
    use crate::queryir::CmpOp;

    fn ab_store() -> TableStore {
        let a = TableDef {
            name: "a".into(),
            columns: vec![ColumnDef::new("id", ColumnKind::Integer)],
            primary_key: Some("id".into()),
        };
        let b = TableDef {
            name: "b".into(),
            columns: vec![
                ColumnDef::new("a_id", ColumnKind::Integer).nullable(),
                ColumnDef::new("x", ColumnKind::Integer),
            ],
            primary_key: None,
        };
        let edge = FkEdge {
            child_table: "b".into(),
            child_column: "a_id".into(),
            parent_table: "a".into(),
            parent_column: "id".into(),
        };
        let schema = SchemaCatalog::new(vec![a.clone(), b.clone()], vec![edge]).unwrap();
        let i = |v| Some(Value::Int(v));
        let ta = Table::from_rows(a, &[vec![i(1)], vec![i(2)]]).unwrap();
        let tb = Table::from_rows(
            b,
            &[vec![i(1), i(5)], vec![i(1), i(6)], vec![i(3), i(7)], vec![None, i(8)]],
        )
        .unwrap();
        TableStore::new(schema, vec![ta, tb]).unwrap()
    }

    fn join_query(store: &TableStore) -> Query {
        Query {
            tables: ["a", "b"].iter().map(|s| s.to_string()).collect(),
            joins: store.schema().fk_edges.iter().cloned().collect(),
            predicates: BTreeSet::new(),
        }
    }

    #[test]
    fn single_table_without_predicates_counts_rows() {
        let store = ab_store();
        let q = Query::single_table("b");
        assert_eq!(true_cardinality(&store, &q).unwrap(), 4);
    }

    #[test]
    fn hand_checked_join() {
        let store = ab_store();
        assert_eq!(true_cardinality(&store, &join_query(&store)).unwrap(), 2);
    }

    #[test]
    fn predicates_filter_before_join() {
        let store = ab_store();
        let mut q = join_query(&store);
        q.predicates.insert(Predicate::new("b", "x", CmpOp::Gt, Value::Int(5)));
        assert_eq!(true_cardinality(&store, &q).unwrap(), 1);
        q.predicates.insert(Predicate::new("a", "id", CmpOp::Eq, Value::Int(2)));
        assert_eq!(true_cardinality(&store, &q).unwrap(), 0);
    }

    #[test]
    fn nulls_never_join_or_qualify() {
        let store = ab_store();
        let mut q = Query::single_table("b");
        q.predicates
            .insert(Predicate::new("b", "a_id", CmpOp::Lt, Value::Int(100)));
        assert_eq!(true_cardinality(&store, &q).unwrap(), 3);
    }

    #[test]
    fn disconnected_query_is_invalid() {
        let store = ab_store();
        let mut q = join_query(&store);
        q.joins.clear();
        assert!(matches!(true_cardinality(&store, &q), Err(DataError::InvalidQuery(_))));
    }
}
