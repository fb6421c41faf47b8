//! Recursive-descent parser for the supported SQL subset:
//!
//! ```text
//! statement  := SELECT COUNT '(' '*' ')' FROM table_ref { ',' table_ref }
//!               [ WHERE condition { AND condition } ] [ ';' ]
//! table_ref  := identifier [ AS ] [ alias ]
//! condition  := column_ref '=' column_ref          -- PK/FK join
//!             | column_ref op operand
//!             | literal op column_ref
//! operand    := literal | '?'
//! column_ref := [ alias '.' ] identifier
//! op         := '=' | '<' | '>'
//! literal    := [ '-' ] number | string | DATE string
//! ```
//!
//! Keywords are case-insensitive. A `?` placeholder may appear once, as
//! `column = ?`, and turns the statement into a template.

use std::collections::BTreeMap;

use super::query::{CmpOp, Predicate, Query};
use super::template::ColumnRef;
use super::QueryError;
use crate::datastore::{parse_date, ColumnKind, FkEdge, SchemaCatalog, Value};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Number(text[start..i].to_string()),
                pos: start,
            });
            continue;
        }
        if c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match bytes.get(i) {
                    None => {
                        return Err(QueryError::Syntax {
                            position: start,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => {
                        s.push('\'');
                        i += 2;
                    }
                    Some(b'\'') => {
                        i += 1;
                        break;
                    }
                    Some(_) => {
                        let ch = text[i..].chars().next().expect("in bounds");
                        s.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
            continue;
        }
        let two = text.get(i..i + 2);
        let sym: &'static str = match two {
            Some("<=") => "<=",
            Some(">=") => ">=",
            Some("<>") => "<>",
            Some("!=") => "!=",
            _ => match c {
                b',' => ",",
                b'.' => ".",
                b'(' => "(",
                b')' => ")",
                b'*' => "*",
                b';' => ";",
                b'?' => "?",
                b'=' => "=",
                b'<' => "<",
                b'>' => ">",
                b'-' => "-",
                _ => {
                    return Err(QueryError::Syntax {
                        position: start,
                        message: format!("unexpected character {:?}", text[i..].chars().next().unwrap()),
                    })
                }
            },
        };
        i += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            pos: start,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: text.len(),
    });
    Ok(out)
}

/// Result of parsing: either a plain query or a template with one
/// placeholder column.
#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Query(Query),
    Template { base: Query, placeholder: ColumnRef },
}

enum Operand {
    Column(ColumnRef),
    Literal(Literal, usize),
    Placeholder(usize),
}

enum Literal {
    Number(String),
    Str(String),
    Date(String),
}

struct Parser<'a> {
    tokens: Vec<Token>,
    at: usize,
    schema: &'a SchemaCatalog,
    /// alias -> table
    aliases: BTreeMap<String, String>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax {
            position: self.peek().pos,
            message: message.into(),
        })
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            self.syntax(format!("expected {kw}"))
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.peek().tok == Tok::Sym(leak(s)) {
            self.next();
            Ok(())
        } else {
            self.syntax(format!("expected '{s}'"))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), QueryError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                let pos = self.next().pos;
                Ok((s, pos))
            }
            _ => self.syntax("expected identifier"),
        }
    }

    fn statement(&mut self) -> Result<Statement, QueryError> {
        self.keyword("SELECT")?;
        self.keyword("COUNT")?;
        self.sym("(")?;
        self.sym("*")?;
        self.sym(")")?;
        self.keyword("FROM")?;
        loop {
            self.table_ref()?;
            if self.peek().tok == Tok::Sym(",") {
                self.next();
            } else {
                break;
            }
        }

        let mut joins = Vec::new();
        let mut predicates = Vec::new();
        let mut placeholder: Option<(ColumnRef, usize)> = None;
        if self.is_keyword("WHERE") {
            self.next();
            loop {
                self.condition(&mut joins, &mut predicates, &mut placeholder)?;
                if self.is_keyword("AND") {
                    self.next();
                } else if self.is_keyword("OR") {
                    return Err(QueryError::UnsupportedOperator {
                        position: self.peek().pos,
                        op: "OR".into(),
                    });
                } else {
                    break;
                }
            }
        }
        if self.peek().tok == Tok::Sym(";") {
            self.next();
        }
        if self.peek().tok != Tok::Eof {
            return self.syntax("unexpected trailing input");
        }

        let query = Query::new(self.aliases.values().cloned(), joins, predicates);
        query.validate(self.schema)?;
        Ok(match placeholder {
            None => Statement::Query(query),
            Some((placeholder, _)) => Statement::Template {
                base: query,
                placeholder,
            },
        })
    }

    fn table_ref(&mut self) -> Result<(), QueryError> {
        let (table, _) = self.ident()?;
        if self.schema.table(&table).is_none() {
            return Err(QueryError::UnknownTable(table));
        }
        if self.is_keyword("AS") {
            self.next();
        }
        let alias = match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => self.ident()?.0,
            _ => table.clone(),
        };
        if self.aliases.values().any(|t| *t == table) {
            return Err(QueryError::DuplicateTable(table));
        }
        if self.aliases.insert(alias.clone(), table).is_some() {
            return Err(QueryError::DuplicateAlias(alias));
        }
        Ok(())
    }

    fn column_ref(&mut self) -> Result<(ColumnRef, usize), QueryError> {
        let (first, pos) = self.ident()?;
        if self.peek().tok == Tok::Sym(".") {
            self.next();
            let (column, _) = self.ident()?;
            let table = self
                .aliases
                .get(&first)
                .cloned()
                .ok_or(QueryError::UnknownAlias(first))?;
            let def = self.schema.table(&table).expect("checked in FROM");
            if def.column(&column).is_none() {
                return Err(QueryError::UnknownColumn { table, column });
            }
            return Ok((ColumnRef { table, column }, pos));
        }
        let owners: Vec<&String> = self
            .aliases
            .values()
            .filter(|t| self.schema.table(t).is_some_and(|d| d.column(&first).is_some()))
            .collect();
        match owners.as_slice() {
            [t] => Ok((
                ColumnRef {
                    table: (*t).clone(),
                    column: first,
                },
                pos,
            )),
            [] => Err(QueryError::UnknownColumn {
                table: String::new(),
                column: first,
            }),
            _ => Err(QueryError::AmbiguousColumn(first)),
        }
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        let pos = self.peek().pos;
        match self.peek().tok.clone() {
            Tok::Sym("?") => {
                self.next();
                Ok(Operand::Placeholder(pos))
            }
            Tok::Sym("-") => {
                self.next();
                match self.next().tok {
                    Tok::Number(n) => Ok(Operand::Literal(Literal::Number(format!("-{n}")), pos)),
                    _ => Err(QueryError::Syntax {
                        position: pos,
                        message: "expected number after '-'".into(),
                    }),
                }
            }
            Tok::Number(n) => {
                self.next();
                Ok(Operand::Literal(Literal::Number(n), pos))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Operand::Literal(Literal::Str(s), pos))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("DATE") => {
                self.next();
                match self.next().tok {
                    Tok::Str(s) => Ok(Operand::Literal(Literal::Date(s), pos)),
                    _ => Err(QueryError::Syntax {
                        position: pos,
                        message: "expected string after DATE".into(),
                    }),
                }
            }
            Tok::Ident(_) => {
                let (c, _) = self.column_ref()?;
                Ok(Operand::Column(c))
            }
            _ => self.syntax("expected column, literal or '?'"),
        }
    }

    fn operator(&mut self) -> Result<CmpOp, QueryError> {
        let t = self.peek().clone();
        let op = match &t.tok {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(s @ ("<=" | ">=" | "<>" | "!=")) => {
                return Err(QueryError::UnsupportedOperator {
                    position: t.pos,
                    op: s.to_string(),
                })
            }
            Tok::Ident(s)
                if ["LIKE", "IN", "BETWEEN", "IS", "NOT"]
                    .iter()
                    .any(|k| s.eq_ignore_ascii_case(k)) =>
            {
                return Err(QueryError::UnsupportedOperator {
                    position: t.pos,
                    op: s.to_uppercase(),
                })
            }
            _ => return self.syntax("expected comparison operator"),
        };
        self.next();
        Ok(op)
    }

    fn condition(
        &mut self,
        joins: &mut Vec<FkEdge>,
        predicates: &mut Vec<Predicate>,
        placeholder: &mut Option<(ColumnRef, usize)>,
    ) -> Result<(), QueryError> {
        let lhs = self.operand()?;
        let op_pos = self.peek().pos;
        let op = self.operator()?;
        let rhs = self.operand()?;
        match (lhs, rhs) {
            (Operand::Column(a), Operand::Column(b)) => {
                if op != CmpOp::Eq {
                    return Err(QueryError::UnsupportedOperator {
                        position: op_pos,
                        op: format!("column {} column", op.symbol()),
                    });
                }
                joins.push(self.fk_edge(&a, &b)?);
            }
            (Operand::Column(c), Operand::Literal(lit, pos)) => {
                predicates.push(self.predicate(c, op, lit, pos)?);
            }
            (Operand::Literal(lit, pos), Operand::Column(c)) => {
                predicates.push(self.predicate(c, op.flipped(), lit, pos)?);
            }
            (Operand::Column(c), Operand::Placeholder(pos)) | (Operand::Placeholder(pos), Operand::Column(c)) => {
                if op != CmpOp::Eq {
                    return Err(QueryError::UnsupportedOperator {
                        position: op_pos,
                        op: format!("{} ?", op.symbol()),
                    });
                }
                if placeholder.is_some() {
                    return Err(QueryError::MultiplePlaceholders { position: pos });
                }
                *placeholder = Some((c, pos));
            }
            _ => {
                return Err(QueryError::Syntax {
                    position: op_pos,
                    message: "a condition needs at least one column".into(),
                })
            }
        }
        Ok(())
    }

    fn fk_edge(&self, a: &ColumnRef, b: &ColumnRef) -> Result<FkEdge, QueryError> {
        self.schema
            .fk_edges
            .iter()
            .find(|e| {
                let side = |c: &ColumnRef| e.column_of(&c.table) == Some(c.column.as_str());
                e.touches(&a.table) && e.other(&a.table) == Some(b.table.as_str()) && side(a) && side(b)
            })
            .cloned()
            .ok_or_else(|| QueryError::NonFkJoin(format!("{}.{} = {}.{}", a.table, a.column, b.table, b.column)))
    }

    fn predicate(&self, c: ColumnRef, op: CmpOp, lit: Literal, pos: usize) -> Result<Predicate, QueryError> {
        let kind = self
            .schema
            .table(&c.table)
            .and_then(|t| t.column(&c.column))
            .map(|c| c.kind)
            .expect("resolved column");
        let kind_err = || QueryError::LiteralKind {
            table: c.table.clone(),
            column: c.column.clone(),
            expected: kind,
        };
        let value = match (lit, kind) {
            (Literal::Number(n), ColumnKind::Integer) => Value::Int(n.parse().map_err(|_| kind_err())?),
            (Literal::Number(n), ColumnKind::Float) => {
                let v: f64 = n.parse().map_err(|_| kind_err())?;
                if !v.is_finite() {
                    return Err(kind_err());
                }
                Value::Float(v)
            }
            (Literal::Str(s) | Literal::Date(s), ColumnKind::Date) => {
                Value::Date(parse_date(&s).ok_or_else(|| QueryError::Syntax {
                    position: pos,
                    message: format!("invalid date {s:?}, expected YYYY-MM-DD"),
                })?)
            }
            (Literal::Str(_), _) => {
                return Err(QueryError::UnsupportedLiteral {
                    position: pos,
                    message: "string predicates are not supported".into(),
                })
            }
            _ => return Err(kind_err()),
        };
        Ok(Predicate {
            table: c.table,
            column: c.column,
            op,
            value,
        })
    }
}

const RESERVED: [&str; 9] = ["SELECT", "FROM", "WHERE", "AND", "OR", "AS", "COUNT", "NOT", "DATE"];

fn is_reserved(s: &str) -> bool {
    RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k))
}

fn leak(s: &str) -> &'static str {
    // symbols are drawn from a fixed set
    const SYMS: [&str; 15] = [
        ",", ".", "(", ")", "*", ";", "?", "=", "<", ">", "-", "<=", ">=", "<>", "!=",
    ];
    SYMS.iter().find(|x| **x == s).copied().unwrap_or("")
}

/// Parses a statement that may contain one placeholder.
pub fn parse_statement(sql: &str, schema: &SchemaCatalog) -> Result<Statement, QueryError> {
    let mut p = Parser {
        tokens: lex(sql)?,
        at: 0,
        schema,
        aliases: BTreeMap::new(),
    };
    p.statement()
}

/// Parses a plain query; placeholders are rejected.
pub fn parse_query(sql: &str, schema: &SchemaCatalog) -> Result<Query, QueryError> {
    match parse_statement(sql, schema)? {
        Statement::Query(q) => Ok(q),
        Statement::Template { .. } => Err(QueryError::PlaceholderNotAllowed {
            position: sql.find('?').unwrap_or(0),
        }),
    }
}
