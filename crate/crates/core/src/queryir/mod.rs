//! Query intermediate representation.
//!
//! A [`Query`] is three sets: tables, PK/FK join edges and simple
//! predicates. This module also holds the SQL subset parser and canonical
//! renderer, the random training-query generator and template expansion.

mod generator;
mod parser;
mod query;
mod render;
mod template;

pub use generator::{generate_query, GeneratorConfig, LiteralSource, QueryGenerator};
pub use parser::{parse_query, parse_statement, Statement};
pub use query::{CmpOp, Predicate, Query};
pub use render::render_sql;
pub use template::{expand_template, sampled_values, ColumnRef, Grouping, QueryTemplate, TemplateInstance};

use thiserror::Error;

use crate::datastore::ColumnKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {}", column_text(.table, .column))]
    UnknownColumn { table: String, column: String },
    #[error("unknown alias {0}")]
    UnknownAlias(String),
    #[error("duplicate alias {0}")]
    DuplicateAlias(String),
    #[error("column {0} is ambiguous, qualify it with an alias")]
    AmbiguousColumn(String),
    #[error("join {0} is not a foreign key edge of the schema")]
    NonFkJoin(String),
    #[error("join {0} references a table outside the query")]
    JoinOutsideQuery(String),
    #[error("unsupported operator {op} at position {position}")]
    UnsupportedOperator { position: usize, op: String },
    #[error("unsupported literal at position {position}: {message}")]
    UnsupportedLiteral { position: usize, message: String },
    #[error("literal for {table}.{column} must be {expected}")]
    LiteralKind {
        table: String,
        column: String,
        expected: ColumnKind,
    },
    #[error("table {0} appears twice")]
    DuplicateTable(String),
    #[error("more than one {op} predicate on {table}.{column}")]
    DuplicatePredicate { table: String, column: String, op: CmpOp },
    #[error("query has no tables")]
    EmptyQuery,
    #[error("joins do not connect the query tables as a tree")]
    Disconnected,
    #[error("placeholder '?' at position {position} is only allowed in templates")]
    PlaceholderNotAllowed { position: usize },
    #[error("template has no '?' placeholder")]
    NoPlaceholder,
    #[error("second placeholder at position {position}")]
    MultiplePlaceholders { position: usize },
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("no sampled values for {table}.{column}")]
    EmptySample { table: String, column: String },
    #[error("year grouping needs a date column, {table}.{column} is not one")]
    NonDateColumnForYear { table: String, column: String },
    #[error("invalid generator config: {0}")]
    InvalidGenerator(String),
}

fn column_text(table: &str, column: &str) -> String {
    if table.is_empty() {
        column.to_string()
    } else {
        format!("{table}.{column}")
    }
}

impl QueryError {
    /// Character offset into the SQL text, for errors that carry one.
    pub fn position(&self) -> Option<usize> {
        match self {
            QueryError::Syntax { position, .. }
            | QueryError::UnsupportedOperator { position, .. }
            | QueryError::UnsupportedLiteral { position, .. }
            | QueryError::PlaceholderNotAllowed { position }
            | QueryError::MultiplePlaceholders { position } => Some(*position),
            _ => None,
        }
    }
}
