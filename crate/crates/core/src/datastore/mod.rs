//! In-memory columnar relational store: schema catalog, CSV ingestion,
//! seeded sampling, sample bitmaps and the exact join executor used to label
//! training queries.

mod csv_io;
mod executor;
mod histogram;
mod sample;
mod schema;
mod synth;
mod table;
mod value;

pub use csv_io::{load_csv, load_dataset, read_table, write_dataset, write_table, CsvOptions, SCHEMA_FILE};
pub use executor::{join_cardinality, true_cardinality};
pub use histogram::{Bucket, EquiDepthHistogram, DEFAULT_BUCKETS};
pub use sample::{
    conjunctive_bitmap, draw_samples, predicate_bitmap, rows_bitmap, Bitmap, SampleSet, SampleTables,
    DEFAULT_SAMPLE_SIZE,
};
pub use schema::{ColumnDef, FkEdge, SchemaCatalog, TableDef};
pub use synth::{generate_synthetic_dataset, AttributeSpec, Bound, DimensionSpec, FactSpec, SyntheticSpec};
pub use table::{Column, ColumnBuilder, ColumnData, ColumnStats, Table, TableStore};
pub use value::{date_from_days, days_from_date, parse_date, year_of_days, year_start_days, ColumnKind, Value};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("duplicate column {table}.{column}")]
    DuplicateColumn { table: String, column: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {table}.{column}")]
    UnknownColumn { table: String, column: String },
    #[error("missing table {0}")]
    MissingTable(String),
    #[error("missing column {table}.{column}")]
    MissingColumn { table: String, column: String },
    #[error("{table}: cannot parse {text:?} in column {column} at line {row}")]
    TypeParse {
        table: String,
        row: usize,
        column: String,
        text: String,
    },
    #[error("column {column} expects {expected} values")]
    KindMismatch { column: String, expected: ColumnKind },
    #[error("columns of {0} have different lengths")]
    RaggedTable(String),
    #[error("invalid foreign key: {0}")]
    InvalidForeignKey(String),
    #[error("schema contains a join cycle through {0}")]
    CyclicSchema(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
