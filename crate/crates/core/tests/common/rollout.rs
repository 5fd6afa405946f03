//! Random constrained rollouts and an independent check of what they
//! produce.

use rand::seq::IteratorRandom;
use rand::Rng;
use sqlgate::decoder::{canonical_terminal_texts, Decoder};
use sqlgate::parser::{lexeme_terminal, parse_prefix};
use sqlgate::sqlcmp::check_scope;
use sqlgate::tokenizer::END_ID;

pub enum Rollout {
    Finished(String),
    Truncated(String),
    /// No piece was allowed before the end-marker became legal.
    DeadEnd(String),
}

/// Samples uniformly among allowed pieces, taking the end-marker with
/// probability 1/2 whenever it is allowed.
pub fn rollout(d: &Decoder, limit: usize, rng: &mut impl Rng) -> Rollout {
    let mut st = d.initial_state();
    loop {
        let ids = d.next_token_ids(&st).expect("live state");
        let pick = if ids.contains(&END_ID) && (ids.len() == 1 || rng.gen_bool(0.5)) {
            END_ID
        } else {
            match ids.iter().copied().filter(|&i| i != END_ID).choose(rng) {
                Some(i) => i,
                None => return Rollout::DeadEnd(st.p),
            }
        };
        st = d.advance(&st, pick, limit).expect("allowed piece");
        if st.finished {
            return Rollout::Finished(st.p);
        }
        if st.truncated {
            return Rollout::Truncated(st.p);
        }
    }
}

/// Whole statement of `d`'s grammar whose columns are all qualified by a
/// table or alias of their own query.
pub fn sound(d: &Decoder, sql: &str) -> Result<(), String> {
    let terms = canonical_terminal_texts(sql)
        .iter()
        .map(|t| lexeme_terminal(t, d.grammar()).ok_or_else(|| format!("not a terminal: {t}")))
        .collect::<Result<Vec<_>, _>>()?;
    let st = parse_prefix(&terms, d.grammar()).map_err(|e| e.to_string())?;
    if !st.is_complete() {
        return Err("incomplete".into());
    }
    check_scope(sql, d.schema()).map_err(|e| e.to_string())
}
