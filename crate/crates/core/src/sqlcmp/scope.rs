//! Schema and from-clause scoping of column references.

use thiserror::Error;

use super::ast::{parse, ColExpr, Cond, Operand, ParseError, Predicate, Query, Scalar, SetExpr};
use crate::schema::SchemaSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScopeError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("column {0} is not qualified by a table or alias of its query")]
    OutOfScope(String),
}

struct Scope<'a> {
    schema: &'a SchemaSpec,
    /// (name usable as a qualifier, table it denotes)
    names: Vec<(String, &'a str)>,
}

impl Scope<'_> {
    fn column(&self, c: &str) -> Result<(), ScopeError> {
        let ok = c.split_once('.').is_some_and(|(q, col)| {
            self.names
                .iter()
                .any(|(n, t)| n == q && self.schema.table(t).is_some_and(|t| t.has_column(col)))
        });
        if ok {
            Ok(())
        } else {
            Err(ScopeError::OutOfScope(c.to_string()))
        }
    }

    fn col_expr(&self, e: &ColExpr) -> Result<(), ScopeError> {
        match e {
            ColExpr::Column(c) => self.column(c),
            ColExpr::Star => Ok(()),
            ColExpr::Agg { arg, .. } => self.col_expr(arg),
        }
    }

    fn scalar(&self, s: &Scalar) -> Result<(), ScopeError> {
        match s {
            Scalar::Col(c) => self.col_expr(c),
            Scalar::Lit(_) => Ok(()),
        }
    }

    fn cond(&self, c: &Cond) -> Result<(), ScopeError> {
        for p in std::iter::once(&c.first).chain(c.rest.iter().map(|(_, p)| p)) {
            match p {
                Predicate::Compare { lhs, rhs, .. } => {
                    self.col_expr(lhs)?;
                    match rhs {
                        Operand::Scalar(s) => self.scalar(s)?,
                        Operand::Sub(e) => set_expr(e, self.schema)?,
                    }
                }
                Predicate::Between { lhs, lo, hi, .. } => {
                    self.col_expr(lhs)?;
                    self.scalar(lo)?;
                    self.scalar(hi)?;
                }
                Predicate::In { lhs, sub, .. } => {
                    self.col_expr(lhs)?;
                    set_expr(sub, self.schema)?;
                }
                Predicate::Like { lhs, .. } => self.col_expr(lhs)?,
            }
        }
        Ok(())
    }
}

fn query(q: &Query, schema: &SchemaSpec) -> Result<(), ScopeError> {
    let mut names = Vec::new();
    for t in std::iter::once(&q.from.first).chain(q.from.joins.iter().map(|j| &j.table)) {
        let table = schema
            .table(&t.table)
            .ok_or_else(|| ScopeError::UnknownTable(t.table.clone()))?;
        names.push((t.table.clone(), table.name.as_str()));
        if let Some(a) = &t.alias {
            names.push((a.clone(), table.name.as_str()));
        }
    }
    let scope = Scope { schema, names };
    for j in &q.from.joins {
        for (a, b) in &j.on {
            scope.column(a)?;
            scope.column(b)?;
        }
    }
    for c in &q.select {
        scope.col_expr(c)?;
    }
    if let Some(c) = &q.where_ {
        scope.cond(c)?;
    }
    for g in &q.group_by {
        scope.column(g)?;
    }
    if let Some(c) = &q.having {
        scope.cond(c)?;
    }
    for o in &q.order_by {
        scope.col_expr(&o.expr)?;
    }
    Ok(())
}

fn set_expr(e: &SetExpr, schema: &SchemaSpec) -> Result<(), ScopeError> {
    match e {
        SetExpr::Query(q) => query(q, schema),
        SetExpr::Compound { left, right, .. } => {
            set_expr(left, schema)?;
            set_expr(right, schema)
        }
    }
}

/// Checks that every table exists and every column is qualified by a table
/// or alias declared in the from-clause of its own query, and names a
/// column of that table.
pub fn check_scope(sql: &str, schema: &SchemaSpec) -> Result<(), ScopeError> {
    set_expr(&parse(sql)?, schema)
}
