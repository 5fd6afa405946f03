//! Generator/ranker score combination, reranking and literal bridging.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::beam::BeamResult;
use crate::lexer::{lex, LexemeKind};
use crate::schema::SchemaSpec;

pub const DEFAULT_LAMBDA: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("ranker probability {0} is outside (0, 1]")]
    Domain(f64),
    #[error("length must be at least 1")]
    ZeroLength,
    #[error("lambda must be a finite non-negative number, got {0}")]
    Lambda(f64),
    #[error("{candidates} candidates but {probs} ranker probabilities")]
    LengthMismatch { candidates: usize, probs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    lambda: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { lambda: DEFAULT_LAMBDA }
    }
}

impl ScoreParams {
    pub fn new(lambda: f64) -> Result<Self, ScoreError> {
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(ScoreParams { lambda })
        } else {
            Err(ScoreError::Lambda(lambda))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `logp / t + lambda * ln(ranker_p)`.
pub fn combined_score(logp: f64, t: usize, ranker_p: f64, params: &ScoreParams) -> Result<f64, ScoreError> {
    if t == 0 {
        return Err(ScoreError::ZeroLength);
    }
    if !(ranker_p > 0.0 && ranker_p <= 1.0) {
        return Err(ScoreError::Domain(ranker_p));
    }
    Ok(logp / t as f64 + params.lambda * ranker_p.ln())
}

/// Probability that a query answers a question.
pub trait Ranker: Send + Sync {
    fn score(&self, nl: &str, sql: &str) -> f64;
}

/// Scores by how many of the question's schema mentions and quoted
/// literals the query uses: `(hits + 1) / (mentions + 1)`.
#[derive(Debug, Clone)]
pub struct HeuristicRanker {
    identifiers: BTreeSet<String>,
}

impl HeuristicRanker {
    pub fn new(schema: &SchemaSpec) -> Self {
        let mut identifiers: BTreeSet<String> = schema.tables().iter().map(|t| t.name.clone()).collect();
        identifiers.extend(schema.column_names().into_iter().map(String::from));
        HeuristicRanker { identifiers }
    }
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

impl Ranker for HeuristicRanker {
    fn score(&self, nl: &str, sql: &str) -> f64 {
        let nl_words = words(nl);
        let sql_words = words(sql);
        let mentioned: Vec<&String> = self.identifiers.iter().filter(|i| nl_words.contains(*i)).collect();
        let literals = quoted_literals(nl);
        let sql_literals: BTreeSet<String> = lex(sql)
            .into_iter()
            .filter(|l| matches!(l.kind, LexemeKind::Quoted { closed: true }))
            .map(|l| l.text[1..l.text.len() - 1].to_string())
            .collect();
        let hits = mentioned.iter().filter(|i| sql_words.contains(**i)).count()
            + literals.iter().filter(|l| sql_literals.contains(*l)).count();
        let total = mentioned.len() + literals.len();
        (hits + 1) as f64 / (total + 1) as f64
    }
}

/// A ranker returning the same probability for every pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRanker(pub f64);

impl Ranker for ConstantRanker {
    fn score(&self, _: &str, _: &str) -> f64 {
        self.0
    }
}

/// Contents of single-quoted spans in order of appearance.
pub fn quoted_literals(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('\'') {
        let after = &rest[start + 1..];
        let Some(end) = after.find('\'') else {
            break;
        };
        out.push(after[..end].to_string());
        rest = &after[end + 1..];
    }
    out
}

/// Appends ` | v` for each quoted literal `v` of the question.
pub fn bridge_terminals(nl: &str) -> String {
    let mut out = nl.to_string();
    for v in quoted_literals(nl) {
        out.push_str(" | ");
        out.push_str(&v);
    }
    out
}

/// One scored hypothesis as seen by [`rerank_order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub logp: f64,
    pub t: usize,
    pub valid: bool,
}

/// Indices of `items` by combined score, descending. Invalid items come
/// after every valid one; ties keep the input order.
pub fn rerank_order(items: &[Scored], ranker_probs: &[f64], params: &ScoreParams) -> Result<Vec<usize>, ScoreError> {
    if items.len() != ranker_probs.len() {
        return Err(ScoreError::LengthMismatch {
            candidates: items.len(),
            probs: ranker_probs.len(),
        });
    }
    let scores = items
        .iter()
        .zip(ranker_probs)
        .map(|(it, &p)| combined_score(it.logp, it.t.max(1), p, params))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[b]
            .valid
            .cmp(&items[a].valid)
            .then(scores[b].total_cmp(&scores[a]))
            .then(a.cmp(&b))
    });
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// Position in the beam result.
    pub index: usize,
    pub sql: String,
    pub logp: f64,
    pub t: usize,
    pub ranker_p: f64,
    pub combined: f64,
    pub valid: bool,
    pub truncated: bool,
}

/// Re-sorts beam candidates by combined score.
pub fn rerank(result: &BeamResult, nl: &str, ranker: &dyn Ranker, params: &ScoreParams) -> Result<Vec<Ranked>, ScoreError> {
    let probs: Vec<f64> = result.candidates.iter().map(|c| ranker.score(nl, c.text())).collect();
    rerank_with(result, &probs, params)
}

/// [`rerank`] with ranker probabilities given per candidate.
pub fn rerank_with(result: &BeamResult, probs: &[f64], params: &ScoreParams) -> Result<Vec<Ranked>, ScoreError> {
    let items: Vec<Scored> = result
        .candidates
        .iter()
        .map(|c| Scored {
            logp: c.logp,
            t: c.t,
            valid: c.is_valid(),
        })
        .collect();
    let order = rerank_order(&items, probs, params)?;
    order
        .into_iter()
        .map(|i| {
            let c = &result.candidates[i];
            Ok(Ranked {
                index: i,
                sql: c.text().to_string(),
                logp: c.logp,
                t: c.t,
                ranker_p: probs[i],
                combined: combined_score(c.logp, c.t.max(1), probs[i], params)?,
                valid: c.is_valid(),
                truncated: c.state.truncated,
            })
        })
        .collect()
}
