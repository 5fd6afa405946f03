//! Constrained next-piece computation over a growing generation.
//!
//! Each step lexes the generation `p`, parses its longest viable prefix of
//! whole terminals, enumerates and filters the next terminals, and collects
//! the candidate strings `C` that extend `p`. The allowed pieces are the
//! children of `p`'s node in a trie keyed by `p_tokens` followed by the
//! tokenization of `C[len(p)..]`.
//!
//! When the last terminal of `p` ends exactly at the end of `p` it may
//! still grow into a longer terminal (`user` into `users`, `<` into `<=`),
//! so candidates are also built from the state before that terminal.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{Grammar, SqlTerminal, TerminalKind};
use crate::lexer::{lex, LexemeKind};
use crate::parser::{analyze_prefix, extend_analysis, lexeme_terminal, next_terminals, ParseError, ParserState, PrefixAnalysis};
use crate::schema::{AliasMap, SchemaSpec};
use crate::tokenizer::{try_tokenize_terminals, PieceId, TokenTrie, VocabError, Vocabulary, END_ID};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("piece {piece} is not allowed here")]
    IllegalPiece { piece: PieceId },
    #[error("generation already stopped")]
    Stopped,
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SetupError {
    #[error("grammar has not been augmented with a schema")]
    NoSchema,
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// Restricts column terminals to the tables and aliases in scope and alias
/// introductions to fresh names. `aliases` holds bindings fixed outside
/// the query; such an alias counts as in scope when its table is.
pub fn filter_wrong_tokens(
    state: &ParserState,
    nexts: &BTreeSet<SqlTerminal>,
    schema: &SchemaSpec,
    aliases: &AliasMap,
) -> BTreeSet<SqlTerminal> {
    let empty = Default::default();
    let (tables, scoped): (&[String], &AliasMap) = match state.scope() {
        Some(s) => (&s.tables, &s.aliases),
        None => (&[], &empty),
    };
    let in_scope_table = |t: &str| tables.iter().any(|x| x == t);
    let column_ok = |text: &str| {
        let Some((q, c)) = text.split_once('.') else {
            return false;
        };
        if in_scope_table(q) {
            return schema.table(q).is_some_and(|t| t.has_column(c));
        }
        let target = match scoped.get(q) {
            Some(t) => Some(t),
            None => aliases.get(q).filter(|t| in_scope_table(t)),
        };
        target.and_then(|t| schema.table(t)).is_some_and(|t| t.has_column(c))
    };
    let fresh = |a: &str| !scoped.contains(a) && !aliases.contains(a) && !in_scope_table(a);
    nexts
        .iter()
        .filter(|n| match n.kind {
            TerminalKind::ColumnName => column_ok(&n.text),
            TerminalKind::AliasIntro => fresh(&n.text),
            _ => true,
        })
        .cloned()
        .collect()
}

fn alias_is_fresh(state: &ParserState, alias: &str, fixed: &AliasMap) -> bool {
    fixed.get(alias).is_none()
        && state
            .scope()
            .is_none_or(|s| !s.aliases.contains(alias) && !s.tables.iter().any(|t| t == alias))
}

#[derive(Debug, Clone)]
pub struct DecoderState {
    pub p: String,
    pub p_tokens: Vec<PieceId>,
    /// Aliases bound by the innermost query's from-clause so far.
    pub aliases: AliasMap,
    pub finished: bool,
    pub truncated: bool,
    analysis: Arc<PrefixAnalysis>,
}

impl DecoderState {
    pub fn is_stopped(&self) -> bool {
        self.finished || self.truncated
    }

    pub fn parser_state(&self) -> &ParserState {
        &self.analysis.state
    }
}

/// Everything computed for one decoding step.
#[derive(Debug, Clone)]
pub struct Step {
    /// Filtered next terminals after the maximal parsable prefix.
    pub terminals: BTreeSet<SqlTerminal>,
    /// Allowed piece ids, the end-marker included when legal.
    pub pieces: BTreeSet<PieceId>,
    /// Candidate continuations `C[len(p)..]`.
    pub suffixes: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    grammar: Arc<Grammar>,
    vocab: Arc<Vocabulary>,
    fixed_aliases: AliasMap,
}

impl Decoder {
    pub fn new(grammar: Arc<Grammar>, vocab: Arc<Vocabulary>) -> Result<Self, SetupError> {
        Self::with_aliases(grammar, vocab, AliasMap::new())
    }

    pub fn with_aliases(grammar: Arc<Grammar>, vocab: Arc<Vocabulary>, aliases: AliasMap) -> Result<Self, SetupError> {
        if grammar.schema().is_none() {
            return Err(SetupError::NoSchema);
        }
        vocab.check_covers(&grammar)?;
        Ok(Decoder {
            grammar,
            vocab,
            fixed_aliases: aliases,
        })
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn schema(&self) -> &SchemaSpec {
        self.grammar.schema().expect("checked at construction")
    }

    pub fn initial_state(&self) -> DecoderState {
        let analysis = analyze_prefix("", &self.grammar, None).expect("empty prefix is viable");
        DecoderState {
            p: String::new(),
            p_tokens: Vec::new(),
            aliases: AliasMap::new(),
            finished: false,
            truncated: false,
            analysis: Arc::new(analysis),
        }
    }

    /// State for an arbitrary text, tokenized greedily as a whole.
    pub fn state_for_text(&self, p: &str) -> Result<DecoderState, DecodeError> {
        let p_tokens = self.vocab.try_tokenize(p).map_err(|_| ParseError::NotAViablePrefix { index: 0 })?;
        self.state_from_parts(p.to_string(), p_tokens, None)
    }

    /// State for a token history, as a generation loop outside this crate
    /// would hold it. Ids are not checked against the constraints.
    pub fn state_for_tokens(&self, p_tokens: &[PieceId]) -> Result<DecoderState, DecodeError> {
        let finished = p_tokens.last() == Some(&END_ID);
        let mut p = String::new();
        for &id in p_tokens.iter().filter(|&&id| id != END_ID) {
            p.push_str(self.vocab.piece(id).ok_or(DecodeError::IllegalPiece { piece: id })?);
        }
        let mut st = self.state_from_parts(p, p_tokens.to_vec(), None)?;
        st.finished = finished;
        Ok(st)
    }

    fn state_from_parts(
        &self,
        p: String,
        p_tokens: Vec<PieceId>,
        reuse: Option<&ParserState>,
    ) -> Result<DecoderState, DecodeError> {
        let analysis = analyze_prefix(&p, &self.grammar, reuse)?;
        Ok(DecoderState {
            aliases: analysis.state.aliases(),
            p,
            p_tokens,
            finished: false,
            truncated: false,
            analysis: Arc::new(analysis),
        })
    }

    fn filtered(&self, state: &ParserState) -> BTreeSet<SqlTerminal> {
        let nexts = next_terminals(state, &self.grammar);
        let mut out = filter_wrong_tokens(state, &nexts, self.schema(), &self.fixed_aliases);
        let exhausted = !self
            .grammar
            .alias_pool()
            .iter()
            .any(|a| alias_is_fresh(state, a, &self.fixed_aliases));
        if exhausted {
            // "as" is always followed by an alias
            out.remove(&SqlTerminal::keyword("as"));
        }
        out
    }

    pub fn step(&self, state: &DecoderState) -> Step {
        let a = &state.analysis;
        let p = state.p.as_str();
        let end = a.parsable_end();
        let mut suffixes = BTreeSet::new();
        // C = P* + " " + n must extend p; its part past p is P*'s
        // separator and n with the text of p after P* removed.
        let mut collect = |pstar_len: usize, terms: &BTreeSet<SqlTerminal>| {
            let rest = &p[pstar_len..];
            let sep = if pstar_len == 0 { "" } else { " " };
            for n in terms.iter().filter(|n| !n.is_end()) {
                let tail_len = sep.len() + n.text.len();
                if tail_len <= rest.len() {
                    continue;
                }
                let matches = if rest.len() <= sep.len() {
                    sep.starts_with(rest)
                } else {
                    rest.starts_with(sep) && n.text.starts_with(&rest[sep.len()..])
                };
                if matches {
                    let skip = rest.len();
                    let suffix = if skip <= sep.len() {
                        format!("{}{}", &sep[skip..], n.text)
                    } else {
                        n.text[skip - sep.len()..].to_string()
                    };
                    suffixes.insert(suffix);
                }
            }
        };
        let terminals = self.filtered(&a.state);
        collect(end, &terminals);
        if a.open_tail {
            let k = a.ends.len();
            let before = a.state.truncate(k - 1);
            collect(if k >= 2 { a.ends[k - 2] } else { 0 }, &self.filtered(&before));
        }
        // Continuations hang off the node of the current history; only its
        // children are read, so that node is the root here.
        let mut trie = TokenTrie::new();
        for s in &suffixes {
            trie.insert_at(TokenTrie::ROOT, &self.vocab.tokenize(s));
        }
        let mut pieces: BTreeSet<PieceId> = trie.children(TokenTrie::ROOT).collect();
        if a.state.is_complete() && end == p.len() {
            pieces.insert(END_ID);
        }
        Step {
            terminals,
            pieces,
            suffixes,
        }
    }

    pub fn next_token_ids(&self, state: &DecoderState) -> Result<BTreeSet<PieceId>, DecodeError> {
        if state.is_stopped() {
            return Err(DecodeError::Stopped);
        }
        Ok(self.step(state).pieces)
    }

    /// Appends `piece` after checking it is allowed. `limit` caps the
    /// number of pieces, the end-marker included.
    pub fn advance(&self, state: &DecoderState, piece: PieceId, limit: usize) -> Result<DecoderState, DecodeError> {
        if state.is_stopped() {
            return Err(DecodeError::Stopped);
        }
        if !self.step(state).pieces.contains(&piece) {
            return Err(DecodeError::IllegalPiece { piece });
        }
        self.advance_unchecked(state, piece, limit)
    }

    /// [`Decoder::advance`] for a piece already known to be allowed.
    pub fn advance_unchecked(&self, state: &DecoderState, piece: PieceId, limit: usize) -> Result<DecoderState, DecodeError> {
        let mut p_tokens = state.p_tokens.clone();
        p_tokens.push(piece);
        if piece == END_ID {
            let mut next = state.clone();
            next.p_tokens = p_tokens;
            next.finished = true;
            return Ok(next);
        }
        let text = self.vocab.piece(piece).ok_or(DecodeError::IllegalPiece { piece })?;
        let p = format!("{}{text}", state.p);
        let analysis = extend_analysis(&state.analysis, &p, &self.grammar)?;
        let mut next = DecoderState {
            aliases: analysis.state.aliases(),
            p,
            p_tokens,
            finished: false,
            truncated: false,
            analysis: Arc::new(analysis),
        };
        next.truncated = next.p_tokens.len() >= limit;
        Ok(next)
    }

    /// Tokenization the decoder offers for a query: per terminal, each
    /// with its leading separator, ending with the end-marker.
    pub fn gold_pieces(&self, sql: &str) -> Result<Vec<PieceId>, VocabError> {
        let texts = canonical_terminal_texts(sql);
        let mut ids = try_tokenize_terminals(texts.iter().map(String::as_str), &self.vocab)?;
        ids.push(END_ID);
        Ok(ids)
    }

    /// Steps along [`Decoder::gold_pieces`], checking every piece.
    pub fn force(&self, sql: &str, limit: usize) -> Result<DecoderState, DecodeError> {
        let mut st = self.initial_state();
        for id in self.gold_pieces(sql)? {
            st = self.advance(&st, id, limit)?;
            if st.truncated {
                break;
            }
        }
        Ok(st)
    }

    /// Checks that `sql` is a whole query of the grammar whose column
    /// terminals all pass the scope filter at their position.
    pub fn validate(&self, sql: &str) -> Result<(), Invalid> {
        let mut state = ParserState::initial(&self.grammar);
        for (i, text) in canonical_terminal_texts(sql).iter().enumerate() {
            let term = lexeme_terminal(text, &self.grammar).ok_or(Invalid::Syntax { index: i })?;
            if matches!(term.kind, TerminalKind::ColumnName | TerminalKind::AliasIntro) {
                let nexts = next_terminals(&state, &self.grammar);
                let filtered = filter_wrong_tokens(&state, &nexts, self.schema(), &self.fixed_aliases);
                if nexts.contains(&term) && !filtered.contains(&term) {
                    return Err(Invalid::OutOfScope { index: i, text: text.clone() });
                }
            }
            state = state.push(&self.grammar, &term).map_err(|_| Invalid::Syntax { index: i })?;
        }
        if state.is_complete() {
            Ok(())
        } else {
            Err(Invalid::Incomplete)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Invalid {
    #[error("terminal {index} does not parse")]
    Syntax { index: usize },
    #[error("terminal {index} ({text}) is not in scope")]
    OutOfScope { index: usize, text: String },
    #[error("query is incomplete")]
    Incomplete,
}

/// Lexeme texts lowercased outside of string literals.
pub fn canonical_terminal_texts(sql: &str) -> Vec<String> {
    lex(sql)
        .into_iter()
        .map(|l| match l.kind {
            LexemeKind::Quoted { .. } => l.text,
            _ => l.text.to_ascii_lowercase(),
        })
        .collect()
}
