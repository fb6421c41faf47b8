//! Synthetic star-schema generator with tunable cross-table correlation.
//!
//! Every fact row draws a latent position `u = r^skew` with `r ~ U[0,1)`.
//! With probability `correlation`, each of its foreign keys points at a
//! dimension row whose driver attribute (the dimension's first attribute)
//! sits at quantile `u` of that dimension's distinct driver values, and each
//! fact measure is placed at `u` within its range. Otherwise the choice is
//! uniform. A shared `u` couples all dimensions of a fact row, so predicates
//! on different tables are correlated through the join, and the skew makes
//! join fan-out uneven across dimension rows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{ColumnDef, FkEdge, SchemaCatalog, TableDef};
use super::table::{ColumnBuilder, Table, TableStore};
use super::value::{parse_date, ColumnKind, Value};
use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Number(f64),
    Text(String),
}

impl Bound {
    fn resolve(&self, kind: ColumnKind) -> Option<f64> {
        match (self, kind) {
            (Bound::Number(v), ColumnKind::Integer | ColumnKind::Float) => Some(*v),
            (Bound::Text(t), ColumnKind::Date) => parse_date(t).map(f64::from),
            (Bound::Text(t), _) => t.trim().parse().ok(),
            // a bare number for a date is read as a year
            (Bound::Number(y), ColumnKind::Date) => parse_date(&format!("{:04}-01-01", *y as i32)).map(f64::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub min: Bound,
    pub max: Bound,
    #[serde(default)]
    pub null_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactSpec {
    pub name: String,
    pub rows: usize,
    #[serde(default)]
    pub measures: Vec<AttributeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    pub rows: usize,
    /// FK column added to the fact table.
    pub fk_column: String,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_correlation")]
    pub correlation: f64,
    #[serde(default = "default_skew")]
    pub skew: f64,
    pub fact: FactSpec,
    pub dimensions: Vec<DimensionSpec>,
}

fn default_correlation() -> f64 {
    0.8
}

fn default_skew() -> f64 {
    2.0
}

fn attr(name: &str, kind: ColumnKind, min: f64, max: f64) -> AttributeSpec {
    AttributeSpec {
        name: name.into(),
        kind,
        min: Bound::Number(min),
        max: Bound::Number(max),
        null_fraction: 0.0,
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    /// One 100k-row fact table and three dimensions of at most 1k rows.
    pub fn benchmark(correlation: f64) -> Self {
        use ColumnKind::*;
        SyntheticSpec {
            correlation,
            skew: default_skew(),
            fact: FactSpec {
                name: "sales".into(),
                rows: 100_000,
                measures: vec![
                    attr("amount", Integer, 0.0, 1_000_000.0),
                    attr("quantity", Integer, 1.0, 100.0),
                    attr("discount", Float, 0.0, 1.0),
                ],
            },
            dimensions: vec![
                DimensionSpec {
                    name: "product".into(),
                    rows: 1000,
                    fk_column: "product_id".into(),
                    attributes: vec![attr("category", Integer, 0.0, 49.0), attr("price", Float, 1.0, 500.0)],
                },
                DimensionSpec {
                    name: "store".into(),
                    rows: 500,
                    fk_column: "store_id".into(),
                    attributes: vec![
                        attr("region", Integer, 0.0, 19.0),
                        AttributeSpec {
                            name: "opened".into(),
                            kind: Date,
                            min: Bound::Text("1960-01-01".into()),
                            max: Bound::Text("2019-12-31".into()),
                            null_fraction: 0.0,
                        },
                    ],
                },
                DimensionSpec {
                    name: "customer".into(),
                    rows: 800,
                    fk_column: "customer_id".into(),
                    attributes: vec![attr("segment", Integer, 0.0, 9.0), attr("age", Integer, 18.0, 90.0)],
                },
            ],
        }
    }

    /// Small movie-flavoured star used by the demo server.
    pub fn demo() -> Self {
        use ColumnKind::*;
        SyntheticSpec {
            correlation: 0.8,
            skew: default_skew(),
            fact: FactSpec {
                name: "movie_keyword".into(),
                rows: 20_000,
                measures: vec![attr("relevance", Integer, 0.0, 100_000.0)],
            },
            dimensions: vec![
                DimensionSpec {
                    name: "title".into(),
                    rows: 1000,
                    fk_column: "movie_id".into(),
                    attributes: vec![
                        attr("production_year", Integer, 1950.0, 2019.0),
                        AttributeSpec {
                            name: "release_date".into(),
                            kind: Date,
                            min: Bound::Text("1950-01-01".into()),
                            max: Bound::Text("2019-12-31".into()),
                            null_fraction: 0.05,
                        },
                        attr("kind_id", Integer, 1.0, 7.0),
                    ],
                },
                DimensionSpec {
                    name: "keyword".into(),
                    rows: 600,
                    fk_column: "keyword_id".into(),
                    attributes: vec![attr("phonetic_code", Integer, 0.0, 999.0)],
                },
            ],
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation {} outside [0, 1]", self.correlation));
        }
        if !(self.skew > 0.0 && self.skew.is_finite()) {
            return bad(format!("skew {} must be positive", self.skew));
        }
        if self.dimensions.is_empty() {
            return bad("at least one dimension is required".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for name in std::iter::once(&self.fact.name).chain(self.dimensions.iter().map(|d| &d.name)) {
            if !names.insert(name) {
                return bad(format!("duplicate table name {name}"));
            }
        }
        let mut fact_cols = std::collections::BTreeSet::from(["id".to_string()]);
        for d in &self.dimensions {
            if d.rows == 0 {
                return bad(format!("dimension {} has no rows", d.name));
            }
            if d.attributes.is_empty() {
                return bad(format!("dimension {} needs a driver attribute", d.name));
            }
            if !fact_cols.insert(d.fk_column.clone()) {
                return bad(format!("duplicate fact column {}", d.fk_column));
            }
        }
        for m in &self.fact.measures {
            if !fact_cols.insert(m.name.clone()) {
                return bad(format!("duplicate fact column {}", m.name));
            }
        }
        for d in &self.dimensions {
            let mut cols = std::collections::BTreeSet::from(["id"]);
            for a in &d.attributes {
                if !cols.insert(a.name.as_str()) {
                    return bad(format!("duplicate column {}.{}", d.name, a.name));
                }
            }
        }
        for a in self
            .fact
            .measures
            .iter()
            .chain(self.dimensions.iter().flat_map(|d| &d.attributes))
        {
            let (lo, hi) = a.range()?;
            if lo > hi {
                return bad(format!("{}: min exceeds max", a.name));
            }
            if !(0.0..1.0).contains(&a.null_fraction) {
                return bad(format!("{}: null_fraction must be in [0, 1)", a.name));
            }
        }
        Ok(())
    }
}

impl AttributeSpec {
    fn range(&self) -> Result<(f64, f64), DataError> {
        let lo = self.min.resolve(self.kind);
        let hi = self.max.resolve(self.kind);
        match (lo, hi) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            _ => Err(DataError::InvalidSpec(format!(
                "{}: bounds do not parse as {}",
                self.name, self.kind
            ))),
        }
    }

    fn column_def(&self) -> ColumnDef {
        ColumnDef {
            name: self.name.clone(),
            kind: self.kind,
            nullable: self.null_fraction > 0.0,
        }
    }

    /// Value at relative position `pos` in [0, 1].
    fn at(&self, pos: f64) -> Value {
        let (lo, hi) = self.range().expect("validated");
        let v = lo + pos.clamp(0.0, 1.0) * (hi - lo);
        match self.kind {
            ColumnKind::Float => Value::Float(v),
            _ => Value::from_f64(self.kind, v.floor().min(hi)),
        }
    }

    fn uniform(&self, rng: &mut impl Rng) -> Value {
        let (lo, hi) = self.range().expect("validated");
        match self.kind {
            ColumnKind::Float => Value::Float(rng.random_range(lo..=hi)),
            _ => Value::from_f64(self.kind, rng.random_range(lo as i64..=hi as i64) as f64),
        }
    }

    /// Applies the null fraction to a freshly drawn value.
    fn maybe_null(&self, v: Value, rng: &mut impl Rng) -> Option<Value> {
        if self.null_fraction > 0.0 && rng.random::<f64>() < self.null_fraction {
            None
        } else {
            Some(v)
        }
    }
}

struct DriverIndex {
    /// Dimension row indices grouped by driver value, ascending.
    groups: Vec<Vec<usize>>,
}

/// Generates the star schema and its data deterministically from `seed`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<TableStore, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corr = spec.correlation;

    let mut table_defs = Vec::new();
    let mut tables = Vec::new();
    let mut drivers = Vec::new();
    for dim in &spec.dimensions {
        let def = TableDef {
            name: dim.name.clone(),
            columns: std::iter::once(ColumnDef::new("id", ColumnKind::Integer))
                .chain(dim.attributes.iter().map(AttributeSpec::column_def))
                .collect(),
            primary_key: Some("id".into()),
        };
        let mut rows = Vec::with_capacity(dim.rows);
        for i in 0..dim.rows {
            let driver = dim.attributes[0].uniform(&mut rng);
            let (lo, hi) = dim.attributes[0].range()?;
            let pos = if hi > lo {
                (driver.as_f64() - lo) / (hi - lo)
            } else {
                0.5
            };
            let mut row = vec![Some(Value::Int(i as i64 + 1))];
            row.push(dim.attributes[0].maybe_null(driver, &mut rng));
            for a in &dim.attributes[1..] {
                let v = if rng.random::<f64>() < corr {
                    let jitter = rng.random_range(-0.05..=0.05);
                    a.at(pos + jitter)
                } else {
                    a.uniform(&mut rng)
                };
                row.push(a.maybe_null(v, &mut rng));
            }
            rows.push(row);
        }
        let mut by_value: BTreeMap<Value, Vec<usize>> = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if let Some(v) = row[1] {
                by_value.entry(v).or_default().push(i);
            }
        }
        drivers.push(DriverIndex {
            groups: by_value.into_values().collect(),
        });
        tables.push(Table::from_rows(def.clone(), &rows)?);
        table_defs.push(def);
    }

    let fact_def = TableDef {
        name: spec.fact.name.clone(),
        columns: std::iter::once(ColumnDef::new("id", ColumnKind::Integer))
            .chain(
                spec.dimensions
                    .iter()
                    .map(|d| ColumnDef::new(d.fk_column.clone(), ColumnKind::Integer)),
            )
            .chain(spec.fact.measures.iter().map(AttributeSpec::column_def))
            .collect(),
        primary_key: Some("id".into()),
    };
    let mut builders: Vec<_> = fact_def.columns.iter().cloned().map(ColumnBuilder::new).collect();
    for i in 0..spec.fact.rows {
        let u = rng.random::<f64>().powf(spec.skew);
        builders[0].push(Some(Value::Int(i as i64 + 1)))?;
        for (k, (dim, index)) in spec.dimensions.iter().zip(&drivers).enumerate() {
            let row = if !index.groups.is_empty() && rng.random::<f64>() < corr {
                let g = ((u * index.groups.len() as f64) as usize).min(index.groups.len() - 1);
                let group = &index.groups[g];
                group[rng.random_range(0..group.len())]
            } else {
                rng.random_range(0..dim.rows)
            };
            builders[1 + k].push(Some(Value::Int(row as i64 + 1)))?;
        }
        for (k, m) in spec.fact.measures.iter().enumerate() {
            let v = if rng.random::<f64>() < corr {
                let jitter = rng.random_range(-0.01..=0.01);
                m.at(u + jitter)
            } else {
                m.uniform(&mut rng)
            };
            let v = m.maybe_null(v, &mut rng);
            builders[1 + spec.dimensions.len() + k].push(v)?;
        }
    }
    let columns = builders
        .into_iter()
        .map(ColumnBuilder::finish)
        .collect::<Result<_, _>>()?;
    tables.insert(0, Table::new(fact_def.clone(), columns)?);
    table_defs.insert(0, fact_def);

    let edges = spec
        .dimensions
        .iter()
        .map(|d| FkEdge {
            child_table: spec.fact.name.clone(),
            child_column: d.fk_column.clone(),
            parent_table: d.name.clone(),
            parent_column: "id".into(),
        })
        .collect();
    let schema = SchemaCatalog::new(table_defs, edges)?;
    TableStore::new(schema, tables)
}
