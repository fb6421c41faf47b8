//! The Deep Sketch artifact: vocabulary, trained network, materialized
//! samples and baseline statistics in one immutable, self-contained value.

mod baselines;
mod create;
mod eval;
mod format;

pub use baselines::{connected_subsets, join_key, BaselineStats, ZeroTupleGuess};
pub use create::{create_sketch, NoProgress, Phase, ProgressEvent, ProgressSink, SketchConfig};
pub use eval::{
    evaluate_workload, CardinalityEstimator, EstimatorSummary, EvalReport, GroundTruth, IndependenceBaseline,
    QueryRecord, SamplingBaseline, SketchModel,
};
pub use format::{FORMAT_VERSION, MAGIC};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::{DataError, SampleSet, SampleTables, SchemaCatalog, Value};
use crate::featurizer::{featurize, EncodingVocabulary, FeatureError, SymbolKind};
use crate::mscn::{predict, MscnError, MscnParams, MscnShape, TrainReport};
use crate::queryir::{self, parse_statement, Query, QueryError, QueryTemplate, Statement, TemplateInstance};

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("not a sketch file (bad magic bytes)")]
    BadMagic,
    #[error("sketch file is truncated")]
    TruncatedFile,
    #[error("sketch file checksum mismatch")]
    ChecksumMismatch,
    #[error("sketch format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt sketch: {0}")]
    Corrupt(String),
    #[error("{kind} {name} is not covered by this sketch")]
    UnknownSymbol { kind: SymbolKind, name: String },
    #[error(transparent)]
    Query(QueryError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(MscnError),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("every training query has cardinality 0")]
    DegenerateLabels,
    #[error("invalid sketch config: {0}")]
    InvalidConfig(String),
    #[error("sketch creation cancelled")]
    Cancelled,
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<QueryError> for SketchError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownTable(name) => SketchError::UnknownSymbol {
                kind: SymbolKind::Table,
                name,
            },
            QueryError::UnknownColumn { table, column } => SketchError::UnknownSymbol {
                kind: SymbolKind::Column,
                name: if table.is_empty() {
                    column
                } else {
                    format!("{table}.{column}")
                },
            },
            other => SketchError::Query(other),
        }
    }
}

impl From<FeatureError> for SketchError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::UnknownSymbol { kind, name } => SketchError::UnknownSymbol { kind, name },
            FeatureError::EmptyTrainingSet => SketchError::EmptyCorpus,
            FeatureError::DegenerateLabels => SketchError::DegenerateLabels,
            FeatureError::Data(d) => SketchError::Data(d),
        }
    }
}

impl From<MscnError> for SketchError {
    fn from(e: MscnError) -> Self {
        match e {
            MscnError::EmptyCorpus => SketchError::EmptyCorpus,
            MscnError::Cancelled => SketchError::Cancelled,
            MscnError::InvalidConfig(m) => SketchError::InvalidConfig(m),
            other => SketchError::Model(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchMetadata {
    pub format_version: u32,
    pub seed: u64,
    /// Seconds since the Unix epoch, as supplied by the creator.
    pub created_at: i64,
    /// FNV-1a of the canonical JSON config, hex.
    pub config_hash: String,
    pub tables: Vec<String>,
    pub sample_size: usize,
    pub num_queries: usize,
    pub config: SketchConfig,
    pub train: TrainReport,
}

/// Estimated cardinality plus diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub cardinality: f64,
    pub flags: EstimateFlags,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateFlags {
    /// Tables none of whose sampled rows satisfy the query's predicates.
    pub zero_tuple_tables: Vec<String>,
    /// Some literal lay outside its column's value range.
    pub clamped_literals: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeepSketch {
    metadata: SketchMetadata,
    schema: SchemaCatalog,
    vocab: EncodingVocabulary,
    params: MscnParams<f32>,
    sample_index: SampleSet,
    samples: SampleTables,
    baselines: BaselineStats,
}

impl DeepSketch {
    /// Assembles a sketch after checking that the parts agree.
    pub fn from_parts(
        metadata: SketchMetadata,
        schema: SchemaCatalog,
        vocab: EncodingVocabulary,
        params: MscnParams<f32>,
        sample_index: SampleSet,
        samples: SampleTables,
        baselines: BaselineStats,
    ) -> Result<Self, SketchError> {
        let corrupt = |m: String| Err(SketchError::Corrupt(m));
        let expected = MscnShape::new(&vocab.dims(), params.shape().hidden);
        if expected != params.shape() {
            return corrupt(format!(
                "parameter shape {:?} does not fit the vocabulary",
                params.shape()
            ));
        }
        let mut names: Vec<&str> = schema.table_names().collect();
        names.sort_unstable();
        if names != vocab.tables().iter().map(String::as_str).collect::<Vec<_>>() {
            return corrupt("vocabulary tables differ from the schema".into());
        }
        if samples.size() != vocab.sample_size() || sample_index.size != vocab.sample_size() {
            return corrupt("sample size differs from the vocabulary".into());
        }
        for name in names {
            let rows = sample_index
                .rows(name)
                .ok_or_else(|| SketchError::Corrupt(format!("no sample index for {name}")))?;
            let table = samples
                .table(name)
                .ok_or_else(|| SketchError::Corrupt(format!("no sample rows for {name}")))?;
            if rows.len() != table.row_count() {
                return corrupt(format!("sample of {name} has inconsistent length"));
            }
        }
        if !params.is_finite() {
            return corrupt("non-finite parameters".into());
        }
        Ok(DeepSketch {
            metadata,
            schema,
            vocab,
            params,
            sample_index,
            samples,
            baselines,
        })
    }

    pub fn metadata(&self) -> &SketchMetadata {
        &self.metadata
    }

    /// The schema subset this sketch covers.
    pub fn schema(&self) -> &SchemaCatalog {
        &self.schema
    }

    pub fn vocabulary(&self) -> &EncodingVocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &MscnParams<f32> {
        &self.params
    }

    pub fn sample_index(&self) -> &SampleSet {
        &self.sample_index
    }

    pub fn samples(&self) -> &SampleTables {
        &self.samples
    }

    pub fn baselines(&self) -> &BaselineStats {
        &self.baselines
    }

    /// Parses a query against the sketch's schema subset.
    pub fn parse(&self, sql: &str) -> Result<Query, SketchError> {
        Ok(queryir::parse_query(sql, &self.schema)?)
    }

    /// Parses a query or a template with one `?` placeholder.
    pub fn parse_statement(&self, sql: &str) -> Result<Statement, SketchError> {
        Ok(parse_statement(sql, &self.schema)?)
    }

    fn check(&self, query: &Query) -> Result<(), SketchError> {
        Ok(query.validate(&self.schema)?)
    }

    pub fn estimate(&self, query: &Query) -> Result<Estimate, SketchError> {
        self.check(query)?;
        let features = featurize(&self.vocab, query, &self.samples)?;
        let cardinality = predict(&self.params, &self.vocab, &features)?;
        let zero_tuple_tables = query
            .tables
            .iter()
            .zip(&features.tables)
            .filter(|(_, t)| t.bitmap.is_all_zero())
            .map(|(name, _)| name.clone())
            .collect();
        Ok(Estimate {
            cardinality,
            flags: EstimateFlags {
                zero_tuple_tables,
                clamped_literals: features.clamped,
            },
        })
    }

    pub fn estimate_sql(&self, sql: &str) -> Result<Estimate, SketchError> {
        self.estimate(&self.parse(sql)?)
    }

    pub fn sampling_estimate(&self, query: &Query) -> Result<f64, SketchError> {
        self.check(query)?;
        self.baselines.sampling_estimate(&self.samples, query)
    }

    pub fn independence_estimate(&self, query: &Query) -> Result<f64, SketchError> {
        self.check(query)?;
        self.baselines.independence_estimate(query)
    }

    /// Non-null sampled values of a column.
    pub fn sampled_values(&self, table: &str, column: &str) -> Result<Vec<Value>, SketchError> {
        let col = self
            .samples
            .table(table)
            .and_then(|t| t.column(column))
            .ok_or_else(|| SketchError::UnknownSymbol {
                kind: SymbolKind::Column,
                name: format!("{table}.{column}"),
            })?;
        Ok(col.values().collect())
    }

    /// Instantiates `template` over the sketch's sampled placeholder values.
    pub fn expand_template(&self, template: &QueryTemplate) -> Result<Vec<TemplateInstance>, SketchError> {
        template.validate(&self.schema)?;
        let p = &template.placeholder;
        let values = self.sampled_values(&p.table, &p.column)?;
        Ok(queryir::expand_template(template, &values)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SketchError> {
        format::decode(bytes)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), SketchError> {
        let tmp = path.with_extension("dsk.tmp");
        let written = std::fs::write(&tmp, self.to_bytes()).and_then(|()| std::fs::rename(&tmp, path));
        if written.is_err() {
            let _ = std::fs::remove_file(&tmp);
        }
        Ok(written?)
    }

    pub fn load(path: &Path) -> Result<Self, SketchError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
