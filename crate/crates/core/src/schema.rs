//! Database schema descriptions and alias bindings.
//!
//! A [`SchemaSpec`] is the identifier universe the grammar is augmented
//! with: one `<table-name>` alternative per table and one `<column-name>`
//! alternative per qualified column. Identifiers are folded to lowercase
//! on ingestion so comparisons never depend on casing.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::is_reserved_word;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("schema has no tables")]
    EmptySchema,
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("table `{0}` has no columns")]
    EmptyTable(String),
    #[error("`{0}` is not a valid identifier")]
    InvalidIdentifier(String),
    #[error("`{0}` is a reserved SQL keyword")]
    ReservedIdentifier(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("alias `{0}` is already bound")]
    DuplicateAlias(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSpec {
    pub name: String,
    pub columns: Vec<String>,
}

impl TableSpec {
    pub fn has_column(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaSpec {
    pub name: String,
    tables: Vec<TableSpec>,
}

// On-disk layout. Column types and any other keys are accepted and ignored.
#[derive(Deserialize, Serialize)]
struct SchemaDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    tables: Vec<TableDoc>,
}

#[derive(Deserialize, Serialize)]
struct TableDoc {
    name: String,
    columns: Vec<ColumnDoc>,
}

#[derive(Deserialize, Serialize)]
struct ColumnDoc {
    name: String,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    ty: Option<String>,
}

fn check_identifier(raw: &str) -> Result<String, SchemaError> {
    let id = raw.trim().to_ascii_lowercase();
    let mut chars = id.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if !head_ok || !chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(SchemaError::InvalidIdentifier(raw.to_string()));
    }
    Ok(id)
}

impl SchemaSpec {
    /// Validates and case-folds a schema given as `(table, columns)` pairs.
    pub fn new<T, C, S>(name: &str, tables: T) -> Result<Self, SchemaError>
    where
        T: IntoIterator<Item = (S, C)>,
        C: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<TableSpec> = Vec::new();
        for (table, columns) in tables {
            let table = check_identifier(table.as_ref())?;
            if is_reserved_word(&table) {
                return Err(SchemaError::ReservedIdentifier(table));
            }
            if out.iter().any(|t| t.name == table) {
                return Err(SchemaError::DuplicateTable(table));
            }
            let mut cols: Vec<String> = Vec::new();
            for column in columns {
                let column = check_identifier(column.as_ref())?;
                if cols.contains(&column) {
                    return Err(SchemaError::DuplicateColumn { table, column });
                }
                cols.push(column);
            }
            if cols.is_empty() {
                return Err(SchemaError::EmptyTable(table));
            }
            out.push(TableSpec {
                name: table,
                columns: cols,
            });
        }
        if out.is_empty() {
            return Err(SchemaError::EmptySchema);
        }
        Ok(SchemaSpec {
            name: name.trim().to_ascii_lowercase(),
            tables: out,
        })
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&TableSpec> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Distinct bare column names across all tables, in schema order.
    pub fn column_names(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for c in self.tables.iter().flat_map(|t| t.columns.iter()) {
            if !seen.contains(&c.as_str()) {
                seen.push(c);
            }
        }
        seen
    }

    pub fn to_json(&self) -> String {
        let doc = SchemaDoc {
            name: Some(self.name.clone()),
            tables: self
                .tables
                .iter()
                .map(|t| TableDoc {
                    name: t.name.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnDoc {
                            name: c.clone(),
                            ty: None,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("schema serializes")
    }
}

/// Parses the JSON schema document format.
pub fn load_schema(document: &str) -> Result<SchemaSpec, SchemaError> {
    let doc: SchemaDoc =
        serde_json::from_str(document).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    let name = doc.name.unwrap_or_else(|| "schema".to_string());
    SchemaSpec::new(
        &name,
        doc.tables
            .into_iter()
            .map(|t| (t.name, t.columns.into_iter().map(|c| c.name).collect::<Vec<_>>())),
    )
}

/// Ordered alias → table bindings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    bindings: IndexMap<String, String>,
}

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `alias` to an existing table of `schema`.
    pub fn bind(&mut self, alias: &str, table: &str, schema: &SchemaSpec) -> Result<(), SchemaError> {
        let alias = check_identifier(alias)?;
        let table = table.to_ascii_lowercase();
        if schema.table(&table).is_none() {
            return Err(SchemaError::UnknownTable(table));
        }
        if self.bindings.contains_key(&alias) || schema.table(&alias).is_some() {
            return Err(SchemaError::DuplicateAlias(alias));
        }
        self.bindings.insert(alias, table);
        Ok(())
    }

    /// Inserts without schema validation; used by the parser, which only
    /// binds aliases after a table name it has already accepted.
    pub(crate) fn insert_unchecked(&mut self, alias: &str, table: &str) {
        self.bindings.insert(alias.to_string(), table.to_string());
    }

    pub fn get(&self, alias: &str) -> Option<&str> {
        self.bindings.get(alias).map(String::as_str)
    }

    pub fn contains(&self, alias: &str) -> bool {
        self.bindings.contains_key(alias)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.bindings.iter().map(|(a, t)| (a.as_str(), t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

/// All `table.column` strings, followed by `alias.column` for every alias
/// binding. Aliases never shadow table names, so the result has no duplicates.
pub fn qualified_columns(schema: &SchemaSpec, aliases: &AliasMap) -> Vec<String> {
    let mut out: Vec<String> = schema
        .tables()
        .iter()
        .flat_map(|t| t.columns.iter().map(move |c| format!("{}.{}", t.name, c)))
        .collect();
    for (alias, table) in aliases.iter() {
        if let Some(t) = schema.table(table) {
            out.extend(t.columns.iter().map(|c| format!("{alias}.{c}")));
        }
    }
    out
}
