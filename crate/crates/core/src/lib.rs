//! Learned cardinality estimation with Deep Sketches.
//!
//! A Deep Sketch bundles a multi-set convolutional network (MSCN) with
//! materialized base-table samples. Queries are represented as three sets
//! (tables, joins, predicates); per-table sample bitmaps give the network a
//! runtime signal about qualifying tuples.
//!
//! - [`datastore`]: columnar store, sampling, exact join executor.
//! - [`queryir`]: query sets, SQL subset parser/renderer, generator, templates.
//! - [`featurizer`]: encoding vocabulary and feature construction.
//! - [`mscn`]: the network, its gradients, Adam and the training loop.
//! - [`sketch`]: the sketch artifact, baselines, evaluation and file format.

pub mod datastore;
pub mod featurizer;
pub mod mscn;
pub mod queryir;
pub mod seed;
pub mod sketch;
#[cfg(test)]
mod testutil;
