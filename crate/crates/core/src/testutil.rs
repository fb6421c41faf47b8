//! Small fixtures shared by unit tests.

use crate::datastore::{SchemaCatalog, Table, TableStore, Value};

/// Star schema: fact f with FKs to a, b and c.
pub fn star_store() -> TableStore {
    let schema = SchemaCatalog::from_toml(
        r#"
        [[tables]]
        name = "f"
        primary_key = "id"
        columns = [
          { name = "id", kind = "integer" },
          { name = "a_id", kind = "integer" },
          { name = "b_id", kind = "integer" },
          { name = "c_id", kind = "integer" },
          { name = "x", kind = "float" },
        ]
        [[tables]]
        name = "a"
        primary_key = "id"
        columns = [{ name = "id", kind = "integer" }, { name = "v", kind = "integer" }]
        [[tables]]
        name = "b"
        primary_key = "id"
        columns = [{ name = "id", kind = "integer" }, { name = "d", kind = "date", nullable = true }]
        [[tables]]
        name = "c"
        primary_key = "id"
        columns = [{ name = "id", kind = "integer" }, { name = "w", kind = "integer" }]
        [[foreign_keys]]
        child_table = "f"
        child_column = "a_id"
        parent_table = "a"
        [[foreign_keys]]
        child_table = "f"
        child_column = "b_id"
        parent_table = "b"
        [[foreign_keys]]
        child_table = "f"
        child_column = "c_id"
        parent_table = "c"
        "#,
    )
    .unwrap();
    let dim = |name: &str, f: &dyn Fn(i64) -> Option<Value>| {
        let def = schema.table(name).unwrap().clone();
        let rows: Vec<_> = (1..=10).map(|i| vec![Some(Value::Int(i)), f(i)]).collect();
        Table::from_rows(def, &rows).unwrap()
    };
    let a = dim("a", &|i| Some(Value::Int(i % 3)));
    let b = dim("b", &|i| (i % 4 != 0).then_some(Value::Date(9000 + i as i32 * 40)));
    let c = dim("c", &|i| Some(Value::Int(i * 10)));
    let f_rows: Vec<_> = (1..=50)
        .map(|i| {
            vec![
                Some(Value::Int(i)),
                Some(Value::Int(i % 10 + 1)),
                Some(Value::Int((i * 3) % 10 + 1)),
                Some(Value::Int((i * 7) % 10 + 1)),
                Some(Value::Float(i as f64 / 4.0)),
            ]
        })
        .collect();
    let f = Table::from_rows(schema.table("f").unwrap().clone(), &f_rows).unwrap();
    TableStore::new(schema, vec![f, a, b, c]).unwrap()
}
