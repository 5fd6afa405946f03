//! Incremental Earley recognition over SQL terminals.
//!
//! A [`ParserState`] is a persistent chart: pushing a terminal shares all
//! earlier Earley sets, so stepping a decoder one terminal at a time costs
//! one set construction. Next-terminal lookahead reads the scan index of
//! the last set directly.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{CSym, Compiled, Grammar, SqlTerminal, TerminalKind, TokenClass};
use crate::lexer::{lex, Lexeme, LexemeKind};
use crate::schema::AliasMap;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("terminal {index} does not extend a viable prefix")]
    NotAViablePrefix { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Item {
    rule: u32,
    dot: u32,
    origin: u32,
}

#[derive(Debug, Default)]
struct EarleySet {
    items: Vec<Item>,
    waiting: HashMap<u32, Vec<u32>>,
    scan_exact: HashMap<u32, Vec<u32>>,
    scan_class: Vec<u32>,
    accepting: bool,
}

/// Tables and aliases visible to one query of a (possibly compound or
/// nested) statement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryScope {
    open_depth: usize,
    in_from: bool,
    pub tables: Vec<String>,
    pub aliases: AliasMap,
}

/// Follows from-clauses purely syntactically: a terminal right after
/// `from` or a join keyword names a table, one right after `as` names an
/// alias of the table before it. A `from` right after `(` opens a nested
/// scope that the matching `)` closes; any other `from` starts a new query
/// at the current level.
#[derive(Debug, Clone, Default)]
struct ScopeTracker {
    depth: usize,
    scopes: Vec<QueryScope>,
    prev: Option<String>,
    last_table: Option<String>,
    history: Vec<(String, String)>,
}

impl ScopeTracker {
    fn observe(&mut self, text: &str) {
        let prev = self.prev.replace(text.to_string());
        let prev = prev.as_deref();
        match text {
            "(" => {
                self.depth += 1;
                return;
            }
            ")" => {
                if self.scopes.len() > 1 && self.scopes.last().is_some_and(|s| s.open_depth == self.depth) {
                    self.scopes.pop();
                }
                self.depth = self.depth.saturating_sub(1);
                return;
            }
            "from" => {
                let fresh = QueryScope {
                    open_depth: self.depth,
                    in_from: true,
                    ..QueryScope::default()
                };
                if prev == Some("(") || self.scopes.is_empty() {
                    self.scopes.push(fresh);
                } else if let Some(top) = self.scopes.last_mut() {
                    *top = fresh;
                }
                self.last_table = None;
                return;
            }
            "select" => {
                if let Some(top) = self.scopes.last_mut() {
                    top.in_from = false;
                }
                return;
            }
            _ => {}
        }
        let Some(top) = self.scopes.last_mut() else {
            return;
        };
        if !top.in_from {
            return;
        }
        match prev {
            Some("from" | "join" | "left join" | "right join") => {
                top.tables.push(text.to_string());
                self.last_table = Some(text.to_string());
            }
            Some("as") => {
                if let Some(table) = &self.last_table {
                    top.aliases.insert_unchecked(text, table);
                    self.history.push((text.to_string(), table.clone()));
                }
            }
            _ => {}
        }
    }

    fn alias_column_matches(&self, text: &str, grammar: &Grammar) -> bool {
        let (Some(schema), Some((alias, column))) = (grammar.schema(), text.split_once('.')) else {
            return false;
        };
        self.history
            .iter()
            .any(|(a, t)| a == alias && schema.table(t).is_some_and(|t| t.has_column(column)))
    }
}

#[derive(Debug, Clone)]
pub struct ParserState {
    consumed: Vec<Arc<SqlTerminal>>,
    chart: Vec<Arc<EarleySet>>,
    /// Scope tracker after each prefix of `consumed`, the empty one first.
    trackers: Vec<Arc<ScopeTracker>>,
}

impl ParserState {
    pub fn initial(grammar: &Grammar) -> Self {
        let g = grammar.compiled();
        let seed = Item {
            rule: g.start_rule,
            dot: 0,
            origin: 0,
        };
        let set = close(vec![seed], &[], g);
        ParserState {
            consumed: Vec::new(),
            chart: vec![Arc::new(set)],
            trackers: vec![Arc::new(ScopeTracker::default())],
        }
    }

    pub fn consumed(&self) -> impl ExactSizeIterator<Item = &SqlTerminal> {
        self.consumed.iter().map(|t| t.as_ref())
    }

    fn tracker(&self) -> &ScopeTracker {
        self.trackers.last().expect("trackers are never empty")
    }

    /// True when the consumed terminals form a whole `<sql>`.
    pub fn is_complete(&self) -> bool {
        self.last().accepting
    }

    /// Tables and aliases declared by the from-clause of the innermost
    /// query being parsed.
    pub fn from_context(&self) -> BTreeSet<String> {
        match self.tracker().scopes.last() {
            Some(scope) => scope
                .tables
                .iter()
                .cloned()
                .chain(scope.aliases.iter().map(|(a, _)| a.to_string()))
                .collect(),
            None => BTreeSet::new(),
        }
    }

    pub fn scope(&self) -> Option<&QueryScope> {
        self.tracker().scopes.last()
    }

    /// Alias bindings of the innermost query.
    pub fn aliases(&self) -> AliasMap {
        self.scope().map(|s| s.aliases.clone()).unwrap_or_default()
    }

    fn last(&self) -> &EarleySet {
        self.chart.last().expect("chart is never empty")
    }

    /// Consumes one terminal, matching on its text.
    pub fn push(&self, grammar: &Grammar, terminal: &SqlTerminal) -> Result<ParserState, ParseError> {
        let g = grammar.compiled();
        let last = self.last();
        let mut seeds = Vec::new();
        if let Some(id) = g.term_ids.get(&terminal.text) {
            if let Some(idxs) = last.scan_exact.get(id) {
                seeds.extend(idxs.iter().map(|&i| advance(last.items[i as usize])));
            }
        }
        for &i in &last.scan_class {
            let item = last.items[i as usize];
            let CSym::Class(class) = g.rules[item.rule as usize].rhs[item.dot as usize] else {
                unreachable!("scan_class holds class items only");
            };
            let hit = match class {
                TokenClass::AliasColumn => self.tracker().alias_column_matches(&terminal.text, grammar),
                other => other.matches_shape(&terminal.text),
            };
            if hit {
                seeds.push(advance(item));
            }
        }
        if seeds.is_empty() {
            return Err(ParseError::NotAViablePrefix {
                index: self.consumed.len(),
            });
        }
        let set = close(seeds, &self.chart, g);
        let mut chart = self.chart.clone();
        chart.push(Arc::new(set));
        let mut consumed = self.consumed.clone();
        consumed.push(Arc::new(terminal.clone()));
        let mut tracker = self.tracker().clone();
        tracker.observe(&terminal.text);
        let mut trackers = self.trackers.clone();
        trackers.push(Arc::new(tracker));
        Ok(ParserState {
            consumed,
            chart,
            trackers,
        })
    }

    /// The state after only the first `n` consumed terminals.
    pub fn truncate(&self, n: usize) -> ParserState {
        if n >= self.consumed.len() {
            return self.clone();
        }
        ParserState {
            consumed: self.consumed[..n].to_vec(),
            chart: self.chart[..=n].to_vec(),
            trackers: self.trackers[..=n].to_vec(),
        }
    }
}

fn advance(item: Item) -> Item {
    Item {
        dot: item.dot + 1,
        ..item
    }
}

// Closes a new Earley set under prediction and completion. Nullable
// nonterminals are stepped over at prediction time, so a completed item
// whose origin is the set being built never needs a completion pass.
fn close(seeds: Vec<Item>, chart: &[Arc<EarleySet>], g: &Compiled) -> EarleySet {
    let pos = chart.len() as u32;
    let mut set = EarleySet::default();
    let mut seen: HashSet<Item> = HashSet::with_capacity(seeds.len() * 4);
    let mut add = |item: Item, set: &mut EarleySet| {
        if seen.insert(item) {
            set.items.push(item);
        }
    };
    for s in seeds {
        add(s, &mut set);
    }
    let mut i = 0;
    while i < set.items.len() {
        let item = set.items[i];
        let rule = &g.rules[item.rule as usize];
        match rule.rhs.get(item.dot as usize) {
            None => {
                if item.origin != pos {
                    let origin = &chart[item.origin as usize];
                    if let Some(parents) = origin.waiting.get(&rule.lhs) {
                        for &p in parents {
                            add(advance(origin.items[p as usize]), &mut set);
                        }
                    }
                }
            }
            Some(CSym::Nt(nt)) => {
                set.waiting.entry(*nt).or_default().push(i as u32);
                for &r in &g.by_lhs[*nt as usize] {
                    add(
                        Item {
                            rule: r,
                            dot: 0,
                            origin: pos,
                        },
                        &mut set,
                    );
                }
                if g.nullable[*nt as usize] {
                    add(advance(item), &mut set);
                }
            }
            Some(CSym::T(t)) => set.scan_exact.entry(*t).or_default().push(i as u32),
            Some(CSym::Class(_)) => set.scan_class.push(i as u32),
        }
        i += 1;
    }
    set.accepting = set
        .items
        .iter()
        .any(|it| it.rule == g.start_rule && it.dot == 1 && it.origin == 0);
    set
}

/// Parses a terminal sequence from the start symbol.
pub fn parse_prefix(terminals: &[SqlTerminal], grammar: &Grammar) -> Result<ParserState, ParseError> {
    let mut state = ParserState::initial(grammar);
    for t in terminals {
        state = state.push(grammar, t)?;
    }
    Ok(state)
}

/// Every terminal that keeps the consumed sequence a viable prefix, plus
/// the end marker when the sequence is already a whole statement.
/// Alias-qualified columns are expanded for every alias bound so far;
/// open token classes of the schema-agnostic grammar are not enumerable
/// and are left out.
pub fn next_terminals(state: &ParserState, grammar: &Grammar) -> BTreeSet<SqlTerminal> {
    let g = grammar.compiled();
    let last = state.last();
    let mut out: BTreeSet<SqlTerminal> = last
        .scan_exact
        .keys()
        .map(|&t| g.terminals[t as usize].clone())
        .collect();
    let wants_alias_columns = last.scan_class.iter().any(|&i| {
        let item = last.items[i as usize];
        g.rules[item.rule as usize].rhs[item.dot as usize] == CSym::Class(TokenClass::AliasColumn)
    });
    if wants_alias_columns {
        if let Some(schema) = grammar.schema() {
            for (alias, table) in &state.tracker().history {
                if let Some(t) = schema.table(table) {
                    out.extend(
                        t.columns
                            .iter()
                            .map(|c| SqlTerminal::new(TerminalKind::ColumnName, format!("{alias}.{c}"))),
                    );
                }
            }
        }
    }
    if last.accepting {
        out.insert(SqlTerminal::end_marker());
    }
    out
}

/// Longest prefix of `p` that lexes into whole terminals forming a viable
/// prefix, and the text after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSplit {
    pub parsable: String,
    pub remainder: String,
}

/// Maps a lexeme's text onto a terminal of `grammar`, if it is one.
pub fn lexeme_terminal(text: &str, grammar: &Grammar) -> Option<SqlTerminal> {
    if let Some(t) = grammar.terminal(text) {
        return Some(t.clone());
    }
    if grammar.is_alias_column_text(text) {
        return Some(SqlTerminal::new(TerminalKind::ColumnName, text));
    }
    if grammar.compiled().has_classes {
        let kind = if TokenClass::Number.matches_shape(text) || TokenClass::Str.matches_shape(text) {
            TerminalKind::Literal
        } else if TokenClass::Qualified.matches_shape(text) {
            TerminalKind::ColumnName
        } else if TokenClass::Ident.matches_shape(text) {
            TerminalKind::TableName
        } else {
            return None;
        };
        return Some(SqlTerminal::new(kind, text));
    }
    None
}

/// Result of lexing and parsing a generation as far as it goes.
#[derive(Debug, Clone)]
pub struct PrefixAnalysis {
    /// Parser state after the viable whole terminals.
    pub state: ParserState,
    /// Byte offset in `p` where each consumed terminal ends.
    pub ends: Vec<usize>,
    /// The last lexeme was a whole terminal ending exactly at the end of
    /// `p` and was consumed; more characters could still turn it into a
    /// longer terminal.
    pub open_tail: bool,
}

impl PrefixAnalysis {
    pub fn parsable_end(&self) -> usize {
        self.ends.last().copied().unwrap_or(0)
    }
}

/// Shared implementation of [`find_parsable_prefix`]. `reuse` may hold a
/// state whose consumed terminals are a prefix of `p`'s terminals.
pub fn analyze_prefix(p: &str, grammar: &Grammar, reuse: Option<&ParserState>) -> Result<PrefixAnalysis, ParseError> {
    let lexemes = lex(p);
    let terms = whole_terminals(&lexemes, grammar);
    // Terminals shared with the reused state keep its chart.
    let shared = reuse.map_or(0, |r| {
        r.consumed
            .iter()
            .zip(&terms)
            .take_while(|(a, b)| a.text == b.text)
            .count()
    });
    let state = match reuse {
        Some(r) if shared > 0 => r.truncate(shared),
        _ => ParserState::initial(grammar),
    };
    let ends: Vec<usize> = lexemes[..shared].iter().map(|l| l.end).collect();
    let open_tail = shared > 0 && shared == lexemes.len() && lexemes[shared - 1].end == p.len();
    consume(p, grammar, state, ends, open_tail, &lexemes[shared..], &terms[shared..])
}

/// [`analyze_prefix`] of `p`, where `prev` analyzed a prefix of `p`. Every
/// consumed terminal of `prev` but the last is kept without lexing again:
/// appended text can only extend the last one, since no terminal starts a
/// compound keyword.
pub fn extend_analysis(prev: &PrefixAnalysis, p: &str, grammar: &Grammar) -> Result<PrefixAnalysis, ParseError> {
    let base = prev.ends.len().saturating_sub(1);
    if base == 0 {
        return analyze_prefix(p, grammar, Some(&prev.state));
    }
    let offset = prev.ends[base - 1];
    let lexemes: Vec<Lexeme> = lex(&p[offset..])
        .into_iter()
        .map(|l| Lexeme {
            start: l.start + offset,
            end: l.end + offset,
            ..l
        })
        .collect();
    let terms = whole_terminals(&lexemes, grammar);
    let state = prev.state.truncate(base);
    consume(p, grammar, state, prev.ends[..base].to_vec(), false, &lexemes, &terms)
}

fn whole_terminals(lexemes: &[Lexeme], grammar: &Grammar) -> Vec<SqlTerminal> {
    let mut terms = Vec::with_capacity(lexemes.len());
    for lx in lexemes {
        let whole = !matches!(lx.kind, LexemeKind::Quoted { closed: false } | LexemeKind::Unknown);
        match whole.then(|| lexeme_terminal(&lx.text, grammar)).flatten() {
            Some(t) => terms.push(t),
            None => break,
        }
    }
    terms
}

// Pushes `terms`, the whole-terminal lexemes at the start of `lexemes`. A
// failure is an error unless it happens on the last lexeme of `p`, which
// may still be a prefix of a longer terminal.
fn consume(
    p: &str,
    grammar: &Grammar,
    mut state: ParserState,
    mut ends: Vec<usize>,
    mut open_tail: bool,
    lexemes: &[Lexeme],
    terms: &[SqlTerminal],
) -> Result<PrefixAnalysis, ParseError> {
    let last_idx = lexemes.len().checked_sub(1);
    for (i, term) in terms.iter().enumerate() {
        let lx = &lexemes[i];
        let at_tail = Some(i) == last_idx && lx.end == p.len();
        match state.push(grammar, term) {
            Ok(s) => {
                state = s;
                ends.push(lx.end);
                open_tail = at_tail;
            }
            Err(e) if !at_tail => return Err(e),
            Err(_) => break,
        }
    }
    Ok(PrefixAnalysis {
        state,
        ends,
        open_tail,
    })
}

pub fn find_parsable_prefix(p: &str, grammar: &Grammar) -> Result<PrefixSplit, ParseError> {
    let a = analyze_prefix(p, grammar, None)?;
    let end = a.parsable_end();
    Ok(PrefixSplit {
        parsable: p[..end].to_string(),
        remainder: p[end..].to_string(),
    })
}
