use std::fmt::Write;

use super::query::Query;
use crate::datastore::Value;

/// Canonical SQL text. Every table is aliased by its own name; joins and
/// predicates follow set order, so equal queries render identically.
pub fn render_sql(query: &Query) -> String {
    let mut out = String::from("SELECT COUNT(*) FROM ");
    let tables: Vec<String> = query.tables.iter().map(|t| format!("{t} {t}")).collect();
    out.push_str(&tables.join(", "));

    let mut conds: Vec<String> = query
        .joins
        .iter()
        .map(|e| {
            format!(
                "{}.{} = {}.{}",
                e.child_table, e.child_column, e.parent_table, e.parent_column
            )
        })
        .collect();
    for p in &query.predicates {
        let mut c = format!("{}.{} {} ", p.table, p.column, p.op);
        match &p.value {
            Value::Date(_) => write!(c, "'{}'", p.value),
            v => write!(c, "{v}"),
        }
        .expect("writing to a String");
        conds.push(c);
    }
    if !conds.is_empty() {
        out.push_str(" WHERE ");
        out.push_str(&conds.join(" AND "));
    }
    out
}
