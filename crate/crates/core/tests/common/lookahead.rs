//! Brute-force lookahead oracle: every candidate terminal is tried with a
//! fresh `push`, and a sample of states is re-parsed from scratch.

use std::collections::BTreeSet;

use sqlgate::grammar::{Grammar, SqlTerminal};
use sqlgate::parser::{next_terminals, parse_prefix, ParserState};

#[derive(Debug, Default)]
pub struct LookaheadReport {
    pub states: usize,
    pub fresh_checks: usize,
    pub mismatches: Vec<String>,
}

fn candidates(g: &Grammar) -> Vec<SqlTerminal> {
    let mut all: BTreeSet<SqlTerminal> = g.terminals().iter().cloned().collect();
    all.extend(g.alias_column_universe());
    all.into_iter().collect()
}

fn brute(state: &ParserState, g: &Grammar, cands: &[SqlTerminal]) -> BTreeSet<SqlTerminal> {
    let mut out: BTreeSet<SqlTerminal> = cands.iter().filter(|t| state.push(g, t).is_ok()).cloned().collect();
    if state.is_complete() {
        out.insert(SqlTerminal::end_marker());
    }
    out
}

/// Visits every state reachable within `depth` terminals. Every
/// `fresh_every`-th state also has each of its successors re-parsed from
/// the start symbol.
pub fn run(g: &Grammar, depth: usize, fresh_every: usize) -> LookaheadReport {
    let cands = candidates(g);
    let mut report = LookaheadReport::default();
    let mut stack = vec![ParserState::initial(g)];
    while let Some(state) = stack.pop() {
        report.states += 1;
        let fast = next_terminals(&state, g);
        let slow = brute(&state, g, &cands);
        let path: Vec<String> = state.consumed().map(|t| t.text.clone()).collect();
        if fast != slow && report.mismatches.len() < 20 {
            let extra: Vec<_> = fast.difference(&slow).map(|t| t.text.clone()).collect();
            let missing: Vec<_> = slow.difference(&fast).map(|t| t.text.clone()).collect();
            report.mismatches.push(format!("{path:?}: extra {extra:?} missing {missing:?}"));
        }
        if fresh_every > 0 && report.states % fresh_every == 0 {
            report.fresh_checks += 1;
            let prefix: Vec<SqlTerminal> = state.consumed().cloned().collect();
            for t in &cands {
                let mut seq = prefix.clone();
                seq.push(t.clone());
                if parse_prefix(&seq, g).is_ok() != fast.contains(t) && report.mismatches.len() < 20 {
                    report.mismatches.push(format!("{path:?} + {}: fresh parse disagrees", t.text));
                }
            }
        }
        if state.consumed().len() < depth {
            for t in fast.iter().filter(|t| !t.is_end()) {
                match state.push(g, t) {
                    Ok(next) => stack.push(next),
                    Err(e) => report.mismatches.push(format!("{path:?} + {}: {e}", t.text)),
                }
            }
        }
    }
    report
}
