//! The SQL context-free grammar and its per-schema augmentation.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::lexer::{is_reserved_word, OPERATORS, PUNCTUATION};
use crate::schema::{qualified_columns, AliasMap, SchemaSpec};

const BASE_BNF: &str = include_str!("sql.bnf");

pub const START: &str = "sql";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("bnf line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("nonterminal <{0}> is referenced but has no rule")]
    Undefined(String),
    #[error("start symbol <{0}> derives no terminal string")]
    Unproductive(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Keyword,
    TableName,
    ColumnName,
    AliasIntro,
    Operator,
    Literal,
    Punctuation,
    EndMarker,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SqlTerminal {
    pub kind: TerminalKind,
    pub text: String,
}

impl SqlTerminal {
    pub fn new(kind: TerminalKind, text: impl Into<String>) -> Self {
        SqlTerminal {
            kind,
            text: text.into(),
        }
    }

    pub fn keyword(text: &str) -> Self {
        Self::new(TerminalKind::Keyword, text)
    }

    pub fn end_marker() -> Self {
        Self::new(TerminalKind::EndMarker, END_TEXT)
    }

    pub fn is_end(&self) -> bool {
        self.kind == TerminalKind::EndMarker
    }
}

impl fmt::Display for SqlTerminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub const END_TEXT: &str = "<end>";

/// Open token classes. Only the schema-agnostic base grammar uses the
/// first four; `AliasColumn` matches `alias.column` for aliases bound
/// earlier in the same parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Ident,
    Qualified,
    Number,
    Str,
    AliasColumn,
}

impl TokenClass {
    fn name(self) -> &'static str {
        match self {
            TokenClass::Ident => "ident",
            TokenClass::Qualified => "qualified",
            TokenClass::Number => "number",
            TokenClass::Str => "string",
            TokenClass::AliasColumn => "alias-column",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ident" => TokenClass::Ident,
            "qualified" => TokenClass::Qualified,
            "number" => TokenClass::Number,
            "string" => TokenClass::Str,
            "alias-column" => TokenClass::AliasColumn,
            _ => return None,
        })
    }

    /// Context-free part of class matching.
    pub(crate) fn matches_shape(self, text: &str) -> bool {
        fn ident(s: &str) -> bool {
            let mut c = s.chars();
            c.next().is_some_and(|h| h.is_ascii_alphabetic() || h == '_')
                && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
        }
        match self {
            TokenClass::Ident => ident(text) && !is_reserved_word(text),
            TokenClass::Qualified | TokenClass::AliasColumn => text
                .split_once('.')
                .is_some_and(|(q, c)| ident(q) && ident(c) && !is_reserved_word(q)),
            TokenClass::Number => {
                let mut parts = text.splitn(2, '.');
                let int = parts.next().unwrap_or("");
                let frac = parts.next();
                !int.is_empty()
                    && int.bytes().all(|b| b.is_ascii_digit())
                    && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
            }
            TokenClass::Str => text.len() >= 2 && text.starts_with('\'') && text.ends_with('\''),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Terminal(SqlTerminal),
    Class(TokenClass),
    NonTerminal(String),
    Optional(Vec<Symbol>),
}

pub type Alternative = Vec<Symbol>;

/// Finite pools for the positions whose surface form is open-ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalPools {
    /// Fresh identifiers usable after `as`.
    pub aliases: Vec<String>,
    /// Numeric literals.
    pub numbers: Vec<String>,
    /// String literals, stored with their quotes.
    pub strings: Vec<String>,
}

impl Default for TerminalPools {
    fn default() -> Self {
        TerminalPools {
            aliases: (1..=9).map(|i| format!("t{i}")).collect(),
            numbers: (0..=10).map(|i| i.to_string()).collect(),
            strings: Vec::new(),
        }
    }
}

impl TerminalPools {
    /// Adds string literals, quoting them if needed. Duplicates are skipped.
    pub fn with_strings<I, S>(mut self, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for v in values {
            let v = v.as_ref();
            let quoted = if v.len() >= 2 && v.starts_with('\'') && v.ends_with('\'') {
                v.to_string()
            } else {
                format!("'{}'", v.replace('\'', ""))
            };
            if !self.strings.contains(&quoted) {
                self.strings.push(quoted);
            }
        }
        self
    }

    pub fn with_numbers<I, S>(mut self, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for v in values {
            let v = v.as_ref().to_string();
            if TokenClass::Number.matches_shape(&v) && !self.numbers.contains(&v) {
                self.numbers.push(v);
            }
        }
        self
    }

    /// Collects literals from a query text, as a gold query would supply them.
    pub fn with_literals_of(self, sql: &str) -> Self {
        let lexemes = crate::lexer::lex(sql);
        let strings: Vec<String> = lexemes
            .iter()
            .filter(|l| matches!(l.kind, crate::lexer::LexemeKind::Quoted { closed: true }))
            .map(|l| l.text.clone())
            .collect();
        let numbers: Vec<String> = lexemes
            .iter()
            .filter(|l| TokenClass::Number.matches_shape(&l.text))
            .map(|l| l.text.clone())
            .collect();
        self.with_strings(strings).with_numbers(numbers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CSym {
    Nt(u32),
    T(u32),
    Class(TokenClass),
}

#[derive(Debug)]
pub(crate) struct CRule {
    pub lhs: u32,
    pub rhs: Vec<CSym>,
}

/// Flattened grammar used by the chart parser: interned symbols, optional
/// groups expanded into helper nonterminals, unproductive alternatives dropped.
#[derive(Debug)]
pub(crate) struct Compiled {
    pub rules: Vec<CRule>,
    pub by_lhs: Vec<Vec<u32>>,
    pub nullable: Vec<bool>,
    pub terminals: Vec<SqlTerminal>,
    pub term_ids: HashMap<String, u32>,
    pub start_rule: u32,
    pub has_classes: bool,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    rules: IndexMap<String, Vec<Alternative>>,
    schema: Option<Arc<SchemaSpec>>,
    alias_pool: Vec<String>,
    compiled: Arc<Compiled>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.schema == other.schema && self.alias_pool == other.alias_pool
    }
}

impl Grammar {
    pub fn from_rules(rules: IndexMap<String, Vec<Alternative>>) -> Result<Self, GrammarError> {
        let compiled = compile(&rules)?;
        Ok(Grammar {
            rules,
            schema: None,
            alias_pool: Vec::new(),
            compiled: Arc::new(compiled),
        })
    }

    pub fn from_bnf(text: &str) -> Result<Self, GrammarError> {
        Self::from_rules(parse_bnf(text)?)
    }

    pub fn alternatives(&self, nonterminal: &str) -> Option<&[Alternative]> {
        self.rules.get(nonterminal).map(Vec::as_slice)
    }

    pub fn rules(&self) -> impl Iterator<Item = (&str, &[Alternative])> {
        self.rules.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn schema(&self) -> Option<&SchemaSpec> {
        self.schema.as_deref()
    }

    pub fn alias_pool(&self) -> &[String] {
        &self.alias_pool
    }

    /// Every exact terminal the grammar can scan, in interning order.
    pub fn terminals(&self) -> &[SqlTerminal] {
        &self.compiled.terminals
    }

    /// Looks up an exact terminal by its surface text.
    pub fn terminal(&self, text: &str) -> Option<&SqlTerminal> {
        self.compiled
            .term_ids
            .get(text)
            .map(|&id| &self.compiled.terminals[id as usize])
    }

    pub(crate) fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    /// Whether `text` has the shape of a column qualified by a pooled alias.
    /// Whether the alias is bound is for the parser to decide.
    pub fn is_alias_column_text(&self, text: &str) -> bool {
        let Some(schema) = self.schema.as_deref() else {
            return false;
        };
        let Some((alias, column)) = text.split_once('.') else {
            return false;
        };
        self.alias_pool.iter().any(|a| a == alias) && schema.column_names().contains(&column)
    }

    /// Every alias-qualified column text the dynamic class could produce.
    pub fn alias_column_universe(&self) -> Vec<SqlTerminal> {
        let Some(schema) = self.schema.as_deref() else {
            return Vec::new();
        };
        let cols = schema.column_names();
        self.alias_pool
            .iter()
            .flat_map(|a| {
                cols.iter()
                    .map(move |c| SqlTerminal::new(TerminalKind::ColumnName, format!("{a}.{c}")))
            })
            .collect()
    }

    pub fn to_bnf(&self) -> String {
        let mut out = String::new();
        for (name, alts) in &self.rules {
            let _ = write!(out, "<{name}> ::=");
            for (i, alt) in alts.iter().enumerate() {
                if i > 0 {
                    let _ = write!(out, "\n    |");
                }
                if alt.is_empty() {
                    out.push_str(" \"\"");
                }
                for sym in alt {
                    out.push(' ');
                    write_symbol(&mut out, sym);
                }
            }
            out.push_str("\n\n");
        }
        out
    }
}

fn write_symbol(out: &mut String, sym: &Symbol) {
    match sym {
        Symbol::Terminal(t) => {
            let _ = write!(out, "\"{}\"", t.text);
        }
        Symbol::Class(c) => {
            let _ = write!(out, "%{}", c.name());
        }
        Symbol::NonTerminal(n) => {
            let _ = write!(out, "<{n}>");
        }
        Symbol::Optional(inner) => {
            out.push('[');
            for s in inner {
                out.push(' ');
                write_symbol(out, s);
            }
            out.push_str(" ]");
        }
    }
}

fn kind_of_literal_text(text: &str) -> TerminalKind {
    if PUNCTUATION.contains(&text) {
        TerminalKind::Punctuation
    } else if OPERATORS.contains(&text) {
        TerminalKind::Operator
    } else {
        TerminalKind::Keyword
    }
}

fn parse_bnf(text: &str) -> Result<IndexMap<String, Vec<Alternative>>, GrammarError> {
    let mut rules: IndexMap<String, Vec<Alternative>> = IndexMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| GrammarError::Syntax {
            line: line_no,
            message: message.to_string(),
        };
        let body = if let Some(rest) = line.strip_prefix('|') {
            if current.is_none() {
                return Err(err("continuation before any rule"));
            }
            rest
        } else {
            let (head, rest) = line.split_once("::=").ok_or_else(|| err("expected `::=`"))?;
            let name = head
                .trim()
                .strip_prefix('<')
                .and_then(|h| h.strip_suffix('>'))
                .ok_or_else(|| err("rule head must be <name>"))?;
            current = Some(name.to_string());
            rules.entry(name.to_string()).or_default();
            rest
        };
        let name = current.clone().expect("set above");
        for alt in body.split('|') {
            let syms = parse_alternative(alt).map_err(|m| err(&m))?;
            rules.get_mut(&name).expect("inserted").push(syms);
        }
    }
    Ok(rules)
}

fn parse_alternative(text: &str) -> Result<Alternative, String> {
    let mut stack: Vec<Vec<Symbol>> = vec![Vec::new()];
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let sym_len;
        if let Some(r) = rest.strip_prefix('"') {
            let end = r.find('"').ok_or("unterminated terminal")?;
            let t = &r[..end];
            if !t.is_empty() {
                stack
                    .last_mut()
                    .expect("nonempty")
                    .push(Symbol::Terminal(SqlTerminal::new(kind_of_literal_text(t), t)));
            }
            sym_len = end + 2;
        } else if let Some(r) = rest.strip_prefix('<') {
            let end = r.find('>').ok_or("unterminated nonterminal")?;
            stack
                .last_mut()
                .expect("nonempty")
                .push(Symbol::NonTerminal(r[..end].to_string()));
            sym_len = end + 2;
        } else if let Some(r) = rest.strip_prefix('%') {
            let end = r.find(char::is_whitespace).unwrap_or(r.len());
            let class = TokenClass::from_name(&r[..end]).ok_or("unknown token class")?;
            stack.last_mut().expect("nonempty").push(Symbol::Class(class));
            sym_len = end + 1;
        } else if rest.starts_with('[') {
            stack.push(Vec::new());
            sym_len = 1;
        } else if rest.starts_with(']') {
            let inner = stack.pop().expect("nonempty");
            let outer = stack.last_mut().ok_or("unbalanced `]`")?;
            outer.push(Symbol::Optional(inner));
            sym_len = 1;
        } else {
            return Err(format!("unexpected input `{rest}`"));
        }
        rest = rest[sym_len..].trim_start();
    }
    if stack.len() != 1 {
        return Err("unbalanced `[`".to_string());
    }
    Ok(stack.pop().expect("nonempty"))
}

fn compile(rules: &IndexMap<String, Vec<Alternative>>) -> Result<Compiled, GrammarError> {
    struct Builder {
        nt_ids: HashMap<String, u32>,
        nt_count: u32,
        rules: Vec<CRule>,
        terminals: Vec<SqlTerminal>,
        term_ids: HashMap<String, u32>,
        has_classes: bool,
    }

    impl Builder {
        fn nt(&mut self, name: &str) -> u32 {
            if let Some(&id) = self.nt_ids.get(name) {
                return id;
            }
            let id = self.nt_count;
            self.nt_count += 1;
            self.nt_ids.insert(name.to_string(), id);
            id
        }

        fn fresh(&mut self) -> u32 {
            let id = self.nt_count;
            self.nt_count += 1;
            id
        }

        fn lower(&mut self, syms: &[Symbol], rules: &IndexMap<String, Vec<Alternative>>) -> Result<Vec<CSym>, GrammarError> {
            let mut out = Vec::with_capacity(syms.len());
            for s in syms {
                out.push(match s {
                    Symbol::Terminal(t) => {
                        let id = match self.term_ids.get(&t.text) {
                            Some(&id) => id,
                            None => {
                                let id = self.terminals.len() as u32;
                                self.terminals.push(t.clone());
                                self.term_ids.insert(t.text.clone(), id);
                                id
                            }
                        };
                        CSym::T(id)
                    }
                    Symbol::Class(c) => {
                        self.has_classes |= *c != TokenClass::AliasColumn;
                        CSym::Class(*c)
                    }
                    Symbol::NonTerminal(n) => {
                        if !rules.contains_key(n) {
                            return Err(GrammarError::Undefined(n.clone()));
                        }
                        CSym::Nt(self.nt(n))
                    }
                    Symbol::Optional(inner) => {
                        let helper = self.fresh();
                        let body = self.lower(inner, rules)?;
                        self.rules.push(CRule { lhs: helper, rhs: Vec::new() });
                        self.rules.push(CRule { lhs: helper, rhs: body });
                        CSym::Nt(helper)
                    }
                });
            }
            Ok(out)
        }
    }

    if !rules.contains_key(START) {
        return Err(GrammarError::Undefined(START.to_string()));
    }
    let mut b = Builder {
        nt_ids: HashMap::new(),
        nt_count: 0,
        rules: Vec::new(),
        terminals: Vec::new(),
        term_ids: HashMap::new(),
        has_classes: false,
    };
    // nonterminal 0 is the augmented start S' -> <sql>
    let accept = b.fresh();
    let sql = b.nt(START);
    b.rules.push(CRule {
        lhs: accept,
        rhs: vec![CSym::Nt(sql)],
    });
    for (name, alts) in rules {
        let lhs = b.nt(name);
        for alt in alts {
            let rhs = b.lower(alt, rules)?;
            b.rules.push(CRule { lhs, rhs });
        }
    }
    let n = b.nt_count as usize;

    // Keep only alternatives whose nonterminals can all derive terminal strings.
    let mut productive = vec![false; n];
    loop {
        let mut changed = false;
        for r in &b.rules {
            if !productive[r.lhs as usize]
                && r.rhs.iter().all(|s| match s {
                    CSym::Nt(x) => productive[*x as usize],
                    _ => true,
                })
            {
                productive[r.lhs as usize] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if !productive[accept as usize] {
        return Err(GrammarError::Unproductive(START.to_string()));
    }
    let kept: Vec<CRule> = b
        .rules
        .into_iter()
        .filter(|r| {
            productive[r.lhs as usize]
                && r.rhs.iter().all(|s| match s {
                    CSym::Nt(x) => productive[*x as usize],
                    _ => true,
                })
        })
        .collect();

    // Re-intern terminals so pruned alternatives leave no trace in the lexicon.
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut terminals = Vec::new();
    let mut term_ids = HashMap::new();
    let kept: Vec<CRule> = kept
        .into_iter()
        .map(|mut r| {
            for s in &mut r.rhs {
                if let CSym::T(old) = s {
                    let new = *remap.entry(*old).or_insert_with(|| {
                        let t = b.terminals[*old as usize].clone();
                        let id = terminals.len() as u32;
                        term_ids.insert(t.text.clone(), id);
                        terminals.push(t);
                        id
                    });
                    *s = CSym::T(new);
                }
            }
            r
        })
        .collect();

    let mut nullable = vec![false; n];
    loop {
        let mut changed = false;
        for r in &kept {
            if !nullable[r.lhs as usize]
                && r.rhs.iter().all(|s| matches!(s, CSym::Nt(x) if nullable[*x as usize]))
            {
                nullable[r.lhs as usize] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut by_lhs = vec![Vec::new(); n];
    for (i, r) in kept.iter().enumerate() {
        by_lhs[r.lhs as usize].push(i as u32);
    }
    let start_rule = by_lhs[accept as usize][0];
    Ok(Compiled {
        rules: kept,
        by_lhs,
        nullable,
        terminals,
        term_ids,
        start_rule,
        has_classes: b.has_classes,
    })
}

/// The schema-agnostic select-only SQL grammar.
pub fn base_grammar() -> Grammar {
    Grammar::from_bnf(BASE_BNF).expect("embedded grammar is well formed")
}

/// Replaces the open identifier and literal rules with alternatives drawn
/// from `schema`, `aliases` and the default terminal pools.
pub fn augment(grammar: &Grammar, schema: &SchemaSpec, aliases: &AliasMap) -> Grammar {
    augment_with(grammar, schema, aliases, &TerminalPools::default())
}

pub fn augment_with(
    grammar: &Grammar,
    schema: &SchemaSpec,
    aliases: &AliasMap,
    pools: &TerminalPools,
) -> Grammar {
    let mut rules = grammar.rules.clone();
    let one = |kind: TerminalKind, text: &str| vec![Symbol::Terminal(SqlTerminal::new(kind, text))];

    let tables: Vec<Alternative> = schema
        .tables()
        .iter()
        .map(|t| one(TerminalKind::TableName, &t.name))
        .collect();
    let columns: Vec<Alternative> = qualified_columns(schema, aliases)
        .iter()
        .map(|c| one(TerminalKind::ColumnName, c))
        .collect();
    let alias_pool: Vec<String> = pools
        .aliases
        .iter()
        .map(|a| a.to_ascii_lowercase())
        .filter(|a| schema.table(a).is_none() && !aliases.contains(a) && !is_reserved_word(a))
        .collect();
    let alias_alts: Vec<Alternative> = alias_pool
        .iter()
        .map(|a| one(TerminalKind::AliasIntro, a))
        .collect();
    let numbers: Vec<Alternative> = pools
        .numbers
        .iter()
        .map(|n| one(TerminalKind::Literal, n))
        .collect();
    let strings: Vec<Alternative> = pools
        .strings
        .iter()
        .map(|s| one(TerminalKind::Literal, s))
        .collect();

    rules.insert("table-name".to_string(), tables);
    rules.insert("column-name".to_string(), columns);
    rules.insert("alias-name".to_string(), alias_alts);
    rules.insert("number".to_string(), numbers);
    rules.insert("string".to_string(), strings);

    let compiled = compile(&rules).expect("augmentation keeps the grammar well formed");
    Grammar {
        rules,
        schema: Some(Arc::new(schema.clone())),
        alias_pool,
        compiled: Arc::new(compiled),
    }
}
