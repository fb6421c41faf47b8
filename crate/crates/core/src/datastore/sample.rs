//! Materialized base-table samples and the qualifying-sample bitmaps built
//! from them.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{Table, TableStore};
use super::DataError;
use crate::queryir::Predicate;
use crate::seed::{derive_seed, name_stream};

/// Default number of sampled tuples per base table.
pub const DEFAULT_SAMPLE_SIZE: usize = 1000;

/// Per-table sampled row indices, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub size: usize,
    pub seed: u64,
    pub indices: BTreeMap<String, Vec<u32>>,
}

impl SampleSet {
    pub fn rows(&self, table: &str) -> Option<&[u32]> {
        self.indices.get(table).map(Vec::as_slice)
    }
}

/// Uniform sampling without replacement, `s` rows per table (all rows when
/// the table is smaller). Each table uses its own stream derived from the
/// seed and the table name.
pub fn draw_samples(store: &TableStore, s: usize, seed: u64) -> SampleSet {
    assert!(s >= 1, "sample size must be positive");
    let indices = store
        .tables()
        .map(|t| (t.name().to_string(), sample_rows(t.row_count(), s, seed, t.name())))
        .collect();
    SampleSet { size: s, seed, indices }
}

fn sample_rows(n: usize, s: usize, seed: u64, table: &str) -> Vec<u32> {
    if n <= s {
        return (0..n as u32).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, name_stream(table)));
    let mut rows: Vec<u32> = rand::seq::index::sample(&mut rng, n, s)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    rows.sort_unstable();
    rows
}

/// Fixed-length bitmap over sample slots. Slots past `valid` (tables smaller
/// than the sample size) are always zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    bits: BitVec<u64, Lsb0>,
    valid: usize,
}

impl Bitmap {
    pub fn zeros(len: usize, valid: usize) -> Self {
        assert!(valid <= len);
        Bitmap {
            bits: bitvec![u64, Lsb0; 0; len],
            valid,
        }
    }

    /// All valid slots set.
    pub fn full(len: usize, valid: usize) -> Self {
        let mut b = Bitmap::zeros(len, valid);
        b.bits[..valid].fill(true);
        b
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn valid(&self) -> usize {
        self.valid
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_all_zero(&self) -> bool {
        self.bits.not_any()
    }

    pub fn get(&self, slot: usize) -> bool {
        self.bits[slot]
    }

    pub fn set(&mut self, slot: usize, on: bool) {
        assert!(slot < self.valid || !on, "slot {slot} is past the valid range");
        self.bits.set(slot, on);
    }

    pub fn and_assign(&mut self, other: &Bitmap) {
        self.bits &= &other.bits;
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn words(&self) -> &[u64] {
        self.bits.as_raw_slice()
    }
}

/// Bitmap of `rows` (one slot each, in order) that satisfy every predicate.
/// `len` is the bitmap width; `rows.len()` must not exceed it.
pub fn rows_bitmap(table: &Table, rows: &[u32], len: usize, predicates: &[&Predicate]) -> Result<Bitmap, DataError> {
    let mut columns = Vec::with_capacity(predicates.len());
    for p in predicates {
        let col = table.column(&p.column).ok_or_else(|| DataError::UnknownColumn {
            table: table.name().to_string(),
            column: p.column.clone(),
        })?;
        columns.push((col, p));
    }
    let mut bitmap = Bitmap::zeros(len, rows.len());
    for (slot, &row) in rows.iter().enumerate() {
        let ok = columns
            .iter()
            .all(|(col, p)| col.satisfies(row as usize, p.op, &p.value));
        if ok {
            bitmap.set(slot, true);
        }
    }
    Ok(bitmap)
}

/// Bitmap of a single predicate over a table's sample.
pub fn predicate_bitmap(
    store: &TableStore,
    samples: &SampleSet,
    table: &str,
    predicate: &Predicate,
) -> Result<Bitmap, DataError> {
    conjunctive_bitmap(store, samples, table, &[predicate])
}

/// Bitmap of a conjunction of predicates over one table's sample.
pub fn conjunctive_bitmap(
    store: &TableStore,
    samples: &SampleSet,
    table: &str,
    predicates: &[&Predicate],
) -> Result<Bitmap, DataError> {
    let t = store.get_table(table)?;
    if let Some(p) = predicates.iter().find(|p| p.table != table) {
        return Err(DataError::UnknownColumn {
            table: table.to_string(),
            column: format!("{}.{}", p.table, p.column),
        });
    }
    let rows = samples
        .rows(table)
        .ok_or_else(|| DataError::UnknownTable(table.to_string()))?;
    rows_bitmap(t, rows, samples.size, predicates)
}

/// Sampled rows copied out of their base tables, so bitmaps can be built
/// without the full store.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTables {
    size: usize,
    tables: BTreeMap<String, Table>,
}

impl SampleTables {
    pub fn materialize(store: &TableStore, samples: &SampleSet) -> Result<Self, DataError> {
        let mut tables = BTreeMap::new();
        for (name, rows) in &samples.indices {
            tables.insert(name.clone(), store.get_table(name)?.take_rows(rows));
        }
        Ok(SampleTables {
            size: samples.size,
            tables,
        })
    }

    /// Wraps already materialized samples. Tables larger than `size` are
    /// rejected.
    pub fn from_tables(size: usize, tables: Vec<Table>) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        for t in tables {
            if t.row_count() > size {
                return Err(DataError::Config(format!(
                    "sample of {} has {} rows, more than the sample size {size}",
                    t.name(),
                    t.row_count()
                )));
            }
            let name = t.name().to_string();
            if map.insert(name.clone(), t).is_some() {
                return Err(DataError::DuplicateTable(name));
            }
        }
        Ok(SampleTables { size, tables: map })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }

    /// Qualifying-sample bitmap of a conjunction on one table.
    pub fn bitmap(&self, table: &str, predicates: &[&Predicate]) -> Result<Bitmap, DataError> {
        let t = self
            .tables
            .get(table)
            .ok_or_else(|| DataError::UnknownTable(table.to_string()))?;
        let rows: Vec<u32> = (0..t.row_count() as u32).collect();
        rows_bitmap(t, &rows, self.size, predicates)
    }
}
