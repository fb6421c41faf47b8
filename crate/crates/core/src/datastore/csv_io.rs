//! CSV ingestion and export for datasets described by a schema file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::schema::{SchemaCatalog, TableDef};
use super::table::{ColumnBuilder, Table, TableStore};
use super::value::Value;
use super::DataError;

/// Name of the schema file inside a dataset directory.
pub const SCHEMA_FILE: &str = "schema.toml";

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub null_token: String,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            null_token: String::new(),
            delimiter: b',',
        }
    }
}

/// Reads one table from CSV. The header must list exactly the schema's columns
/// (in any order).
pub fn read_table<R: Read>(def: &TableDef, reader: R, options: &CsvOptions) -> Result<Table, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = csv.headers().map_err(csv_err)?.clone();
    let mut positions = Vec::with_capacity(def.columns.len());
    for col in &def.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == col.name)
            .ok_or_else(|| DataError::MissingColumn {
                table: def.name.clone(),
                column: col.name.clone(),
            })?;
        positions.push(pos);
    }

    let mut builders: Vec<_> = def.columns.iter().cloned().map(ColumnBuilder::new).collect();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let row = i + 2;
        for ((builder, &pos), col) in builders.iter_mut().zip(&positions).zip(&def.columns) {
            let field = record.get(pos).unwrap_or("");
            let value = if field == options.null_token {
                if !col.nullable {
                    return Err(DataError::TypeParse {
                        table: def.name.clone(),
                        row,
                        column: col.name.clone(),
                        text: field.to_string(),
                    });
                }
                None
            } else {
                Some(Value::parse(field, col.kind).ok_or_else(|| DataError::TypeParse {
                    table: def.name.clone(),
                    row,
                    column: col.name.clone(),
                    text: field.to_string(),
                })?)
            };
            builder.push(value)?;
        }
    }
    let columns = builders
        .into_iter()
        .map(ColumnBuilder::finish)
        .collect::<Result<_, _>>()?;
    Table::new(def.clone(), columns)
}

/// Loads every table of `schema` from its file in `paths`.
pub fn load_csv(
    schema: &SchemaCatalog,
    paths: &BTreeMap<String, PathBuf>,
    options: &CsvOptions,
) -> Result<TableStore, DataError> {
    let mut tables = Vec::with_capacity(schema.tables.len());
    for def in &schema.tables {
        let path = paths
            .get(&def.name)
            .ok_or_else(|| DataError::MissingTable(def.name.clone()))?;
        let file = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        tables.push(read_table(def, file, options)?);
    }
    TableStore::new(schema.clone(), tables)
}

/// Loads `<dir>/schema.toml` and `<dir>/<table>.csv` for every table.
pub fn load_dataset(dir: &Path) -> Result<TableStore, DataError> {
    let schema = SchemaCatalog::load(&dir.join(SCHEMA_FILE))?;
    let paths = schema
        .tables
        .iter()
        .map(|t| (t.name.clone(), dir.join(format!("{}.csv", t.name))))
        .collect();
    load_csv(&schema, &paths, &CsvOptions::default())
}

pub fn write_table<W: Write>(table: &Table, writer: W, options: &CsvOptions) -> Result<(), DataError> {
    let mut csv = csv::WriterBuilder::new()
        .delimiter(options.delimiter)
        .from_writer(writer);
    csv.write_record(table.columns().iter().map(|c| c.name()))
        .map_err(csv_err)?;
    let mut record = Vec::with_capacity(table.columns().len());
    for row in 0..table.row_count() {
        record.clear();
        record.extend(table.columns().iter().map(|c| match c.get(row) {
            Some(v) => v.to_string(),
            None => options.null_token.clone(),
        }));
        csv.write_record(&record).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes `schema.toml` plus one CSV per table into `dir`.
pub fn write_dataset(dir: &Path, store: &TableStore) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SCHEMA_FILE), store.schema().to_toml())?;
    for table in store.tables() {
        let file = File::create(dir.join(format!("{}.csv", table.name())))?;
        write_table(table, std::io::BufWriter::new(file), &CsvOptions::default())?;
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Io(e.to_string())
}
