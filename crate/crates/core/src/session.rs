//! File-backed handle for driving the decoder from an external generation
//! loop: per-step allowed piece ids and post-hoc reranking.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::beam::BeamResult;
use crate::decoder::{DecodeError, Decoder, DecoderState, SetupError};
use crate::grammar::{augment_with, base_grammar, TerminalPools};
use crate::schema::{load_schema, AliasMap, SchemaError, SchemaSpec};
use crate::scoring::{quoted_literals, rerank_order, ScoreError, ScoreParams, Scored};
use crate::sqlcmp::check_scope;
use crate::tokenizer::{PieceId, VocabError, Vocabulary};

/// Size of the vocabulary derived when no vocabulary file is given.
pub const DEFAULT_VOCAB_SIZE: usize = 1000;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Setup(#[from] SetupError),
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path).map_err(|source| SessionError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_schema(path: &Path) -> Result<SchemaSpec, SessionError> {
    Ok(load_schema(&read(path)?)?)
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary, SessionError> {
    Ok(Vocabulary::parse(&read(path)?)?)
}

/// Decoder over the augmented grammar of `schema`. Without a vocabulary, one
/// of [`DEFAULT_VOCAB_SIZE`] pieces is derived from that grammar.
pub fn build_decoder(
    schema: &SchemaSpec,
    pools: &TerminalPools,
    vocab: Option<Arc<Vocabulary>>,
) -> Result<Decoder, SetupError> {
    let g = Arc::new(augment_with(&base_grammar(), schema, &AliasMap::new(), pools));
    let v = vocab.unwrap_or_else(|| Arc::new(Vocabulary::derived(&g, DEFAULT_VOCAB_SIZE)));
    Decoder::new(g, v)
}

/// Default pools plus the quoted literals and numbers of a question.
pub fn question_pools(nl: &str) -> TerminalPools {
    let numbers: Vec<&str> = nl
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | '?' | '!' | ';' | '(' | ')'))
        .map(|w| w.trim_end_matches('.'))
        .collect();
    TerminalPools::default()
        .with_strings(quoted_literals(nl))
        .with_numbers(numbers)
}

pub struct Session {
    decoder: Decoder,
    params: ScoreParams,
    cache: Mutex<HashMap<u64, DecoderState>>,
}

impl Session {
    pub fn open(schema_path: &Path, vocab_path: Option<&Path>) -> Result<Self, SessionError> {
        let schema = read_schema(schema_path)?;
        let vocab = vocab_path.map(read_vocab).transpose()?.map(Arc::new);
        Ok(Self::new(build_decoder(&schema, &TerminalPools::default(), vocab)?))
    }

    pub fn new(decoder: Decoder) -> Self {
        Session {
            decoder,
            params: ScoreParams::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_params(mut self, params: ScoreParams) -> Self {
        self.params = params;
        self
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// State after the history `p_tokens`, checking every piece.
    pub fn state(&self, p_tokens: &[PieceId]) -> Result<DecoderState, DecodeError> {
        self.replay(self.decoder.initial_state(), p_tokens)
    }

    fn replay(&self, from: DecoderState, rest: &[PieceId]) -> Result<DecoderState, DecodeError> {
        let mut st = from;
        for &id in rest {
            st = self.decoder.advance(&st, id, usize::MAX)?;
        }
        Ok(st)
    }

    /// Allowed next ids after the history `p_tokens`, which is checked piece
    /// by piece. A history ending in the end-marker allows nothing.
    pub fn allowed_ids(&self, p_tokens: &[PieceId]) -> Result<Vec<PieceId>, DecodeError> {
        self.ids_of(&self.state(p_tokens)?)
    }

    /// [`Session::allowed_ids`], resuming from the state cached for `seq_id`
    /// when the history extends it.
    pub fn allowed_ids_for(&self, seq_id: u64, p_tokens: &[PieceId]) -> Result<Vec<PieceId>, DecodeError> {
        let cached = self.cache.lock().expect("cache lock").get(&seq_id).cloned();
        let st = match cached {
            Some(c) if p_tokens.starts_with(&c.p_tokens) && !(c.finished && p_tokens.len() > c.p_tokens.len()) => {
                let done = c.p_tokens.len() + usize::from(c.finished);
                self.replay(c, &p_tokens[done.min(p_tokens.len())..])?
            }
            _ => self.replay(self.decoder.initial_state(), p_tokens)?,
        };
        let ids = self.ids_of(&st);
        self.cache.lock().expect("cache lock").insert(seq_id, st);
        ids
    }

    pub fn forget(&self, seq_id: u64) {
        self.cache.lock().expect("cache lock").remove(&seq_id);
    }

    fn ids_of(&self, st: &DecoderState) -> Result<Vec<PieceId>, DecodeError> {
        if st.finished {
            return Ok(Vec::new());
        }
        Ok(self.decoder.next_token_ids(st)?.into_iter().collect())
    }

    /// Reranks externally generated candidates `(sql, logp, t)`. A candidate
    /// is valid when it parses and every column is qualified by a table or
    /// alias of its own query.
    pub fn rerank(&self, candidates: &[(String, f64, usize)], ranker_probs: &[f64]) -> Result<Vec<usize>, ScoreError> {
        let items: Vec<Scored> = candidates
            .iter()
            .map(|(sql, logp, t)| Scored {
                logp: *logp,
                t: *t,
                valid: check_scope(sql, self.decoder.schema()).is_ok(),
            })
            .collect();
        rerank_order(&items, ranker_probs, &self.params)
    }

    /// Candidates of a finished beam in the shape [`Session::rerank`] takes.
    pub fn external_candidates(result: &BeamResult) -> Vec<(String, f64, usize)> {
        result
            .candidates
            .iter()
            .map(|c| (c.text().to_string(), c.logp, c.t))
            .collect()
    }
}
