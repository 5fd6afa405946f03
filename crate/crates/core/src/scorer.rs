//! Per-step next-piece scorers standing in for a generator model.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::decoder::canonical_terminal_texts;
use crate::tokenizer::{tokenize_terminals, try_tokenize_terminals, PieceId, Vocabulary, END_ID};

/// Log-probabilities over the whole vocabulary for the piece following
/// `p_tokens`. Implementations must be pure functions of their input.
pub trait Scorer: Send + Sync {
    fn score_step(&self, p_tokens: &[PieceId]) -> Vec<f64>;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScorerError {
    #[error("trace file is empty")]
    EmptyTrace,
    #[error("unknown scorer spec {0:?}")]
    UnknownSpec(String),
    #[error("bias must lie in (0, 1)")]
    Bias,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![-(n as f64).ln(); n]
}

#[derive(Debug, Clone)]
pub struct UniformScorer {
    size: usize,
}

impl UniformScorer {
    pub fn new(vocab: &Vocabulary) -> Self {
        UniformScorer { size: vocab.len() }
    }
}

impl Scorer for UniformScorer {
    fn score_step(&self, _: &[PieceId]) -> Vec<f64> {
        uniform(self.size)
    }
}

/// Looks distributions up by exact history; uniform elsewhere.
#[derive(Debug, Clone)]
pub struct FixedTableScorer {
    size: usize,
    table: HashMap<Vec<PieceId>, Vec<f64>>,
}

impl FixedTableScorer {
    pub fn new(vocab: &Vocabulary) -> Self {
        FixedTableScorer {
            size: vocab.len(),
            table: HashMap::new(),
        }
    }

    /// Sets the distribution after `history` from unnormalized weights.
    pub fn set_weights(&mut self, history: Vec<PieceId>, weights: &[(PieceId, f64)]) {
        let mut probs = vec![0.0; self.size];
        for &(id, w) in weights {
            probs[id as usize] += w;
        }
        let total: f64 = probs.iter().sum();
        self.table
            .insert(history, probs.iter().map(|p| (p / total).ln()).collect());
    }
}

impl Scorer for FixedTableScorer {
    fn score_step(&self, p_tokens: &[PieceId]) -> Vec<f64> {
        self.table
            .get(p_tokens)
            .cloned()
            .unwrap_or_else(|| uniform(self.size))
    }
}

/// Puts `bias` of the mass on the next piece of a scripted sequence while
/// the history follows it, and is uniform otherwise. The script is a fixed
/// prefix optionally followed by a cycle repeated forever.
#[derive(Debug, Clone)]
pub struct TraceScorer {
    size: usize,
    prefix: Vec<PieceId>,
    cycle: Vec<PieceId>,
    bias: f64,
}

pub const TRACE_BIAS: f64 = 0.99;

impl TraceScorer {
    pub fn new(vocab: &Vocabulary, prefix: Vec<PieceId>, cycle: Vec<PieceId>, bias: f64) -> Result<Self, ScorerError> {
        if !(bias > 0.0 && bias < 1.0) {
            return Err(ScorerError::Bias);
        }
        Ok(TraceScorer {
            size: vocab.len(),
            prefix,
            cycle,
            bias,
        })
    }

    /// Reads the trace format: a query on the first line and an optional
    /// `repeat: <fragment>` line. Without a repeat the query is followed by
    /// the end-marker.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self, ScorerError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let target = lines.next().ok_or(ScorerError::EmptyTrace)?;
        let repeat = lines.find_map(|l| l.strip_prefix("repeat:")).map(str::trim);
        let texts = canonical_terminal_texts(target);
        let mut prefix = tokenize_terminals(texts.iter().map(String::as_str), vocab);
        let cycle = match repeat {
            Some(frag) => {
                let frag_texts = canonical_terminal_texts(frag);
                let spaced: Vec<String> = frag_texts.iter().map(|t| format!(" {t}")).collect();
                spaced.iter().flat_map(|t| vocab.tokenize(t)).collect()
            }
            None => {
                prefix.push(END_ID);
                Vec::new()
            }
        };
        Self::new(vocab, prefix, cycle, TRACE_BIAS)
    }

    fn scripted(&self, i: usize) -> Option<PieceId> {
        if i < self.prefix.len() {
            Some(self.prefix[i])
        } else if self.cycle.is_empty() {
            None
        } else {
            Some(self.cycle[(i - self.prefix.len()) % self.cycle.len()])
        }
    }
}

impl Scorer for TraceScorer {
    fn score_step(&self, p_tokens: &[PieceId]) -> Vec<f64> {
        let on_script = p_tokens
            .iter()
            .enumerate()
            .all(|(i, &id)| self.scripted(i) == Some(id));
        match self.scripted(p_tokens.len()).filter(|_| on_script) {
            Some(next) if self.size > 1 => {
                let rest = ((1.0 - self.bias) / (self.size - 1) as f64).ln();
                let mut out = vec![rest; self.size];
                out[next as usize] = self.bias.ln();
                out
            }
            _ => uniform(self.size),
        }
    }
}

/// Laplace-smoothed piece bigram model trained on example queries.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    size: usize,
    counts: HashMap<Option<PieceId>, HashMap<PieceId, u64>>,
    totals: HashMap<Option<PieceId>, u64>,
}

impl NgramScorer {
    /// Trains on newline-delimited queries, tokenized the way the decoder
    /// offers them.
    pub fn train(corpus: &str, vocab: &Vocabulary) -> Self {
        let mut counts: HashMap<Option<PieceId>, HashMap<PieceId, u64>> = HashMap::new();
        let mut totals: HashMap<Option<PieceId>, u64> = HashMap::new();
        for line in corpus.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let texts = canonical_terminal_texts(line);
            let Ok(mut ids) = try_tokenize_terminals(texts.iter().map(String::as_str), vocab) else {
                continue;
            };
            ids.push(END_ID);
            let mut prev = None;
            for id in ids {
                *counts.entry(prev).or_default().entry(id).or_default() += 1;
                *totals.entry(prev).or_default() += 1;
                prev = Some(id);
            }
        }
        NgramScorer {
            size: vocab.len(),
            counts,
            totals,
        }
    }
}

impl Scorer for NgramScorer {
    fn score_step(&self, p_tokens: &[PieceId]) -> Vec<f64> {
        let ctx = p_tokens.last().copied();
        let total = self.totals.get(&ctx).copied().unwrap_or(0) as f64;
        let denom = (total + self.size as f64).ln();
        let mut out = vec![-denom; self.size];
        if let Some(row) = self.counts.get(&ctx) {
            for (&id, &c) in row {
                out[id as usize] = ((c + 1) as f64).ln() - denom;
            }
        }
        out
    }
}

/// Pseudo-random distributions, a deterministic function of the seed and
/// the history.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    size: usize,
    seed: u64,
}

impl RandomScorer {
    pub fn new(vocab: &Vocabulary, seed: u64) -> Self {
        RandomScorer { size: vocab.len(), seed }
    }
}

fn mix(mut h: u64, x: u64) -> u64 {
    h ^= x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h
}

impl Scorer for RandomScorer {
    fn score_step(&self, p_tokens: &[PieceId]) -> Vec<f64> {
        let h = p_tokens.iter().fold(mix(self.seed, p_tokens.len() as u64), |h, &t| mix(h, t as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.size).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let lse = log_sum_exp(logits.iter().copied());
        logits.into_iter().map(|l| l - lse).collect()
    }
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Builds a scorer from a CLI spec: `uniform`, `ngram:<path>` or
/// `trace:<path>`.
pub fn from_spec(spec: &str, vocab: &Vocabulary) -> Result<Box<dyn Scorer>, Box<dyn std::error::Error>> {
    if spec == "uniform" {
        return Ok(Box::new(UniformScorer::new(vocab)));
    }
    if let Some(path) = spec.strip_prefix("ngram:") {
        let text = std::fs::read_to_string(path)?;
        return Ok(Box::new(NgramScorer::train(&text, vocab)));
    }
    if let Some(path) = spec.strip_prefix("trace:") {
        let text = std::fs::read_to_string(path)?;
        return Ok(Box::new(TraceScorer::parse(&text, vocab)?));
    }
    Err(Box::new(ScorerError::UnknownSpec(spec.to_string())))
}
