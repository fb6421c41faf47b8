use ndarray::Array2;

use super::Real;
use crate::featurizer::{FeatureDims, FeaturizedQuery};
use crate::queryir::CmpOp;

/// One feature set for a whole batch: `batch * max_len` rows, padding rows
/// all zero and masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct SetBatch<F> {
    pub features: Array2<F>,
    /// `(batch, max_len)`, 1 for real rows.
    pub mask: Array2<F>,
    pub counts: Vec<usize>,
    pub max_len: usize,
}

impl<F: Real> SetBatch<F> {
    /// `rows[b]` lists the dense feature rows of query `b`. Padding always
    /// leaves at least one row per query so no tensor is empty.
    pub fn from_rows(dim: usize, rows: &[Vec<Vec<F>>]) -> Self {
        let max_len = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let batch = rows.len();
        let mut features = Array2::zeros((batch * max_len, dim));
        let mut mask = Array2::zeros((batch, max_len));
        for (b, set) in rows.iter().enumerate() {
            for (l, row) in set.iter().enumerate() {
                features
                    .row_mut(b * max_len + l)
                    .assign(&ndarray::ArrayView1::from(row.as_slice()));
                mask[[b, l]] = F::one();
            }
        }
        SetBatch {
            features,
            mask,
            counts: rows.iter().map(Vec::len).collect(),
            max_len,
        }
    }

    fn empty(dim: usize, batch: usize, max_len: usize) -> Self {
        SetBatch {
            features: Array2::zeros((batch * max_len, dim)),
            mask: Array2::zeros((batch, max_len)),
            counts: vec![0; batch],
            max_len,
        }
    }

    fn set_real(&mut self, b: usize, l: usize) {
        self.mask[[b, l]] = F::one();
        self.counts[b] = self.counts[b].max(l + 1);
    }
}

/// Padded and masked inputs for the three set modules.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<F> {
    pub tables: SetBatch<F>,
    pub joins: SetBatch<F>,
    pub predicates: SetBatch<F>,
}

impl<F: Real> Batch<F> {
    pub fn len(&self) -> usize {
        self.tables.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expands index-form queries into dense padded rows.
    pub fn assemble(dims: &FeatureDims, queries: &[&FeaturizedQuery]) -> Self {
        let n = queries.len();
        let longest = |f: &dyn Fn(&FeaturizedQuery) -> usize| queries.iter().map(|q| f(q)).max().unwrap_or(0).max(1);

        let mut tables = SetBatch::empty(dims.table_dim(), n, longest(&|q| q.tables.len()));
        let mut joins = SetBatch::empty(dims.join_dim(), n, longest(&|q| q.joins.len()));
        let mut predicates = SetBatch::empty(dims.predicate_dim(), n, longest(&|q| q.predicates.len()));

        let one = F::one();
        for (b, q) in queries.iter().enumerate() {
            for (l, t) in q.tables.iter().enumerate() {
                let mut row = tables.features.row_mut(b * tables.max_len + l);
                row[t.index] = one;
                for slot in t.bitmap.iter_ones() {
                    row[dims.tables + slot] = one;
                }
                tables.set_real(b, l);
            }
            for (l, &j) in q.joins.iter().enumerate() {
                joins.features[[b * joins.max_len + l, j]] = one;
                joins.set_real(b, l);
            }
            for (l, p) in q.predicates.iter().enumerate() {
                let mut row = predicates.features.row_mut(b * predicates.max_len + l);
                row[p.column] = one;
                row[dims.columns + p.op] = one;
                row[dims.columns + CmpOp::ALL.len()] = F::from_f64(p.value).expect("representable");
                predicates.set_real(b, l);
            }
        }
        Batch {
            tables,
            joins,
            predicates,
        }
    }
}
