//! Beam search over the constrained decoder.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::decoder::{DecodeError, Decoder, DecoderState};
use crate::scorer::{log_sum_exp, Scorer};
use crate::tokenizer::{PieceId, END_ID};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BeamError {
    #[error("beam size and length limit must both be at least 1")]
    InvalidConfig,
    #[error("scorer returned {got} scores for a vocabulary of {want}")]
    ScorerShape { got: usize, want: usize },
    #[error("a live hypothesis has no allowed continuation")]
    NoValidExpansion,
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Renormalizes `logps` over `allowed`. Returns `(piece, log-prob)` pairs
/// in piece order; a set whose scores are all `-inf` falls back to uniform.
pub fn masked_distribution(logps: &[f64], allowed: &BTreeSet<PieceId>) -> Vec<(PieceId, f64)> {
    let lse = log_sum_exp(allowed.iter().map(|&id| logps[id as usize]));
    if lse == f64::NEG_INFINITY {
        let u = -(allowed.len() as f64).ln();
        return allowed.iter().map(|&id| (id, u)).collect();
    }
    allowed
        .iter()
        .map(|&id| (id, logps[id as usize] - lse))
        .collect()
}

/// [`masked_distribution`] as probabilities over the whole vocabulary;
/// pieces outside `allowed` get exactly 0.
pub fn masked_probabilities(logps: &[f64], allowed: &BTreeSet<PieceId>) -> Vec<f64> {
    let mut out = vec![0.0; logps.len()];
    for (id, lp) in masked_distribution(logps, allowed) {
        out[id as usize] = lp.exp();
    }
    out
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub state: DecoderState,
    /// Accumulated renormalized log-probability.
    pub logp: f64,
    /// Number of pieces, the end-marker included.
    pub t: usize,
    /// Step at which the hypothesis stopped.
    pub stopped_at: usize,
}

impl Candidate {
    pub fn text(&self) -> &str {
        &self.state.p
    }

    pub fn is_valid(&self) -> bool {
        self.state.finished && !self.state.truncated
    }

    pub fn normalized(&self) -> f64 {
        self.logp / self.t.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct BeamResult {
    pub candidates: Vec<Candidate>,
    pub k: usize,
}

struct Expansion {
    parent: usize,
    piece: PieceId,
    logp: f64,
}

fn seq_cmp(a: (&[PieceId], PieceId), b: (&[PieceId], PieceId)) -> Ordering {
    a.0.iter()
        .copied()
        .chain([a.1])
        .cmp(b.0.iter().copied().chain([b.1]))
}

fn final_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.normalized()
        .total_cmp(&a.normalized())
        .then(a.stopped_at.cmp(&b.stopped_at))
        .then_with(|| a.state.p_tokens.cmp(&b.state.p_tokens))
}

fn settled(stopped: &[Candidate], live: &[Candidate], k: usize) -> bool {
    let best_live = live.iter().map(Candidate::normalized).fold(f64::NEG_INFINITY, f64::max);
    stopped.len() >= k && stopped[k - 1].normalized() >= best_live
}

/// Runs beam search with beam size `k`, capping hypotheses at `limit`
/// pieces. Each step ranks every allowed one-piece expansion of the live
/// hypotheses by log-probability, ties going to the smaller piece
/// sequence, and walks that ranking until `k` live hypotheses are kept.
/// An end-marker expansion ranked within the first `k` moves its
/// hypothesis to the stopped set, as does reaching `limit`; lower ranked
/// end-markers are skipped. Only the `k` best stopped hypotheses by
/// length-normalized log-probability are kept, ties going to the one that
/// stopped first. The search ends when none is live, or when `k` have
/// stopped and the worst of them scores at least the best live
/// hypothesis's current log-probability per piece.
pub fn beam_search(
    decoder: &Decoder,
    scorer: &dyn Scorer,
    k: usize,
    limit: usize,
) -> Result<BeamResult, BeamError> {
    if k == 0 || limit == 0 {
        return Err(BeamError::InvalidConfig);
    }
    let vocab_len = decoder.vocab().len();
    let mut live = vec![Candidate {
        state: decoder.initial_state(),
        logp: 0.0,
        t: 0,
        stopped_at: 0,
    }];
    let mut stopped: Vec<Candidate> = Vec::new();
    let mut step_no = 0;
    while !live.is_empty() && !settled(&stopped, &live, k) {
        step_no += 1;
        let mut pool: Vec<Expansion> = Vec::new();
        for (i, c) in live.iter().enumerate() {
            let allowed = decoder.step(&c.state).pieces;
            if allowed.is_empty() {
                return Err(BeamError::NoValidExpansion);
            }
            let scores = scorer.score_step(&c.state.p_tokens);
            if scores.len() != vocab_len {
                return Err(BeamError::ScorerShape {
                    got: scores.len(),
                    want: vocab_len,
                });
            }
            for (id, lp) in masked_distribution(&scores, &allowed) {
                pool.push(Expansion {
                    parent: i,
                    piece: id,
                    logp: c.logp + lp,
                });
            }
        }
        pool.sort_by(|a, b| {
            b.logp.total_cmp(&a.logp).then_with(|| {
                seq_cmp(
                    (&live[a.parent].state.p_tokens, a.piece),
                    (&live[b.parent].state.p_tokens, b.piece),
                )
            })
        });
        let mut next = Vec::with_capacity(k);
        for (rank, e) in pool.into_iter().enumerate() {
            if next.len() == k {
                break;
            }
            if e.piece == END_ID && rank >= k {
                continue;
            }
            let state = decoder.advance_unchecked(&live[e.parent].state, e.piece, limit)?;
            let c = Candidate {
                t: state.p_tokens.len(),
                stopped_at: step_no,
                logp: e.logp,
                state,
            };
            if c.state.is_stopped() {
                stopped.push(c);
            } else {
                next.push(c);
            }
        }
        live = next;
        stopped.sort_by(final_order);
        stopped.truncate(k);
    }
    Ok(BeamResult { candidates: stopped, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{augment, base_grammar};
    use crate::schema::{AliasMap, SchemaSpec};
    use crate::scorer::{FixedTableScorer, UniformScorer};
    use crate::tokenizer::Vocabulary;
    use std::sync::Arc;

    fn toy_decoder() -> Decoder {
        let s = SchemaSpec::new(
            "toy",
            [
                ("user", vec!["id", "name", "birthdate", "country"]),
                ("account", vec!["userId", "country"]),
            ],
        )
        .unwrap();
        let g = Arc::new(augment(&base_grammar(), &s, &AliasMap::new()));
        let v = Arc::new(Vocabulary::derived(&g, 400));
        Decoder::new(g, v).unwrap()
    }

    #[test]
    fn masking_contract() {
        let logps = vec![(0.1f64).ln(), (0.2f64).ln(), (0.3f64).ln(), (0.4f64).ln()];
        let allowed = BTreeSet::from([1, 3]);
        let p = masked_probabilities(&logps, &allowed);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[2], 0.0);
        assert!((p[1] + p[3] - 1.0).abs() < 1e-12);
        assert!((p[3] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_k1_is_valid() {
        let d = toy_decoder();
        let r = beam_search(&d, &UniformScorer::new(d.vocab()), 1, 128).unwrap();
        assert_eq!(r.candidates.len(), 1);
        let c = &r.candidates[0];
        assert!(c.is_valid(), "{}", c.text());
        d.validate(c.text()).unwrap();
        assert_eq!(c.t, c.state.p_tokens.len());
        assert!(c.logp <= 0.0);
    }

    #[test]
    fn zero_config_is_rejected() {
        let d = toy_decoder();
        let s = UniformScorer::new(d.vocab());
        assert_eq!(beam_search(&d, &s, 0, 10).unwrap_err(), BeamError::InvalidConfig);
        assert_eq!(beam_search(&d, &s, 1, 0).unwrap_err(), BeamError::InvalidConfig);
    }

    #[test]
    fn table_scorer_steers_to_gold() {
        let d = toy_decoder();
        let gold = "from account select account.country";
        let ids = d.gold_pieces(gold).unwrap();
        let mut scorer = FixedTableScorer::new(d.vocab());
        for i in 0..ids.len() {
            scorer.set_weights(ids[..i].to_vec(), &[(ids[i], 0.9), (0, 0.05), (1, 0.05)]);
        }
        let r = beam_search(&d, &scorer, 4, 64).unwrap();
        assert_eq!(r.candidates[0].text(), gold);
        assert!(r.candidates[0].is_valid());
    }
}
