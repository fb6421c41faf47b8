//! Relational schema: tables, typed columns and PK/FK edges.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::value::ColumnKind;
use super::DataError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub nullable: bool,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnDef {
            name: name.into(),
            kind,
            nullable: false,
        }
    }

    pub fn nullable(mut self) -> Self {
        self.nullable = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub primary_key: Option<String>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// `child_table.child_column` references `parent_table.parent_column`,
/// which is always the parent's primary key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FkEdge {
    pub child_table: String,
    pub child_column: String,
    pub parent_table: String,
    #[serde(default)]
    pub parent_column: String,
}

impl FkEdge {
    pub fn touches(&self, table: &str) -> bool {
        self.child_table == table || self.parent_table == table
    }

    /// The endpoint opposite to `table`, if the edge touches it.
    pub fn other(&self, table: &str) -> Option<&str> {
        if self.child_table == table {
            Some(&self.parent_table)
        } else if self.parent_table == table {
            Some(&self.child_table)
        } else {
            None
        }
    }

    /// Join column on the given side of the edge.
    pub fn column_of(&self, table: &str) -> Option<&str> {
        if self.child_table == table {
            Some(&self.child_column)
        } else if self.parent_table == table {
            Some(&self.parent_column)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub tables: Vec<TableDef>,
    #[serde(default, rename = "foreign_keys")]
    pub fk_edges: Vec<FkEdge>,
}

impl SchemaCatalog {
    /// Validates and normalizes a catalog (fills in FK parent columns).
    pub fn new(tables: Vec<TableDef>, fk_edges: Vec<FkEdge>) -> Result<Self, DataError> {
        let mut catalog = SchemaCatalog { tables, fk_edges };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let raw: SchemaCatalog = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        SchemaCatalog::new(raw.tables, raw.fk_edges)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        SchemaCatalog::from_toml(&text)
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|t| t.name.as_str())
    }

    /// The FK edge joining two tables, in either direction.
    pub fn edge_between(&self, a: &str, b: &str) -> Option<&FkEdge> {
        self.fk_edges.iter().find(|e| e.touches(a) && e.other(a) == Some(b))
    }

    /// True if every column in `table` named `column` is a join key
    /// (primary key or FK child column).
    pub fn is_key_column(&self, table: &str, column: &str) -> bool {
        let is_pk = self
            .table(table)
            .and_then(|t| t.primary_key.as_deref())
            .is_some_and(|pk| pk == column);
        is_pk
            || self
                .fk_edges
                .iter()
                .any(|e| e.child_table == table && e.child_column == column)
    }

    /// All FK edges whose endpoints both lie in `tables`.
    pub fn induced_edges<'a>(&'a self, tables: &'a BTreeSet<String>) -> impl Iterator<Item = &'a FkEdge> {
        self.fk_edges
            .iter()
            .filter(move |e| tables.contains(&e.child_table) && tables.contains(&e.parent_table))
    }

    /// Whether the FK edges induced by `tables` connect them.
    pub fn is_connected(&self, tables: &BTreeSet<String>) -> bool {
        let Some(first) = tables.iter().next() else {
            return false;
        };
        let mut seen = BTreeSet::from([first.clone()]);
        let mut stack = vec![first.clone()];
        while let Some(t) = stack.pop() {
            for e in self.induced_edges(tables) {
                if let Some(o) = e.other(&t) {
                    if seen.insert(o.to_string()) {
                        stack.push(o.to_string());
                    }
                }
            }
        }
        seen.len() == tables.len()
    }

    /// Restricts the catalog to `tables` and the edges between them.
    pub fn subset(&self, tables: &[String]) -> Result<SchemaCatalog, DataError> {
        let wanted: BTreeSet<String> = tables.iter().cloned().collect();
        for t in &wanted {
            if self.table(t).is_none() {
                return Err(DataError::UnknownTable(t.clone()));
            }
        }
        let tables = self
            .tables
            .iter()
            .filter(|t| wanted.contains(&t.name))
            .cloned()
            .collect();
        let edges = self.induced_edges(&wanted).cloned().collect();
        SchemaCatalog::new(tables, edges)
    }

    fn validate(&mut self) -> Result<(), DataError> {
        let mut names = BTreeSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(DataError::DuplicateTable(t.name.clone()));
            }
            let mut cols = BTreeSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(DataError::DuplicateColumn {
                        table: t.name.clone(),
                        column: c.name.clone(),
                    });
                }
            }
            if let Some(pk) = &t.primary_key {
                if t.column(pk).is_none() {
                    return Err(DataError::UnknownColumn {
                        table: t.name.clone(),
                        column: pk.clone(),
                    });
                }
            }
        }

        let mut pairs = BTreeSet::new();
        let tables = self.tables.clone();
        let lookup = |name: &str| tables.iter().find(|t| t.name == name);
        for e in &mut self.fk_edges {
            let child = lookup(&e.child_table).ok_or_else(|| DataError::UnknownTable(e.child_table.clone()))?;
            let parent = lookup(&e.parent_table).ok_or_else(|| DataError::UnknownTable(e.parent_table.clone()))?;
            let child_col = child.column(&e.child_column).ok_or_else(|| DataError::UnknownColumn {
                table: e.child_table.clone(),
                column: e.child_column.clone(),
            })?;
            let pk = parent.primary_key.as_ref().ok_or_else(|| {
                DataError::InvalidForeignKey(format!("{} has no primary key to reference", e.parent_table))
            })?;
            if e.parent_column.is_empty() {
                e.parent_column = pk.clone();
            } else if &e.parent_column != pk {
                return Err(DataError::InvalidForeignKey(format!(
                    "{}.{} references non-key column {}.{}",
                    e.child_table, e.child_column, e.parent_table, e.parent_column
                )));
            }
            let pk_kind = parent.column(pk).map(|c| c.kind);
            if pk_kind != Some(child_col.kind) {
                return Err(DataError::InvalidForeignKey(format!(
                    "{}.{} and {}.{} have different kinds",
                    e.child_table, e.child_column, e.parent_table, pk
                )));
            }
            if e.child_table == e.parent_table {
                return Err(DataError::InvalidForeignKey(format!(
                    "self reference on {}",
                    e.child_table
                )));
            }
            if !pairs.insert((e.child_table.clone(), e.parent_table.clone())) {
                return Err(DataError::InvalidForeignKey(format!(
                    "more than one edge from {} to {}",
                    e.child_table, e.parent_table
                )));
            }
        }
        self.check_acyclic()
    }

    /// Rejects schemas whose undirected FK graph contains a cycle.
    fn check_acyclic(&self) -> Result<(), DataError> {
        let index: BTreeMap<&str, usize> = self
            .tables
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.as_str(), i))
            .collect();
        let mut parent: Vec<usize> = (0..self.tables.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.fk_edges {
            let a = find(&mut parent, index[e.child_table.as_str()]);
            let b = find(&mut parent, index[e.parent_table.as_str()]);
            if a == b {
                return Err(DataError::CyclicSchema(format!(
                    "{} - {}",
                    e.child_table, e.parent_table
                )));
            }
            parent[a] = b;
        }
        Ok(())
    }
}
