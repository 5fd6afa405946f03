//! Brute-force oracle for the per-step token trie: allowed pieces after a
//! history are read off the full tokenizations of every candidate.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use sqlgate::grammar::{Grammar, SqlTerminal};
use sqlgate::tokenizer::{allowed_next_pieces, build_step_trie, PieceId, Vocabulary};

pub fn brute(pstar: &str, nexts: &BTreeSet<SqlTerminal>, vocab: &Vocabulary, q: &[PieceId]) -> BTreeSet<PieceId> {
    nexts
        .iter()
        .filter(|n| !n.is_end())
        .map(|n| {
            let c = if pstar.is_empty() { n.text.clone() } else { format!("{pstar} {}", n.text) };
            vocab.tokenize(&c)
        })
        .filter(|s| s.len() > q.len() && s.starts_with(q))
        .map(|s| s[q.len()])
        .collect()
}

/// Random vocabulary covering every character of `g`'s terminals: single
/// characters plus random substrings of terminal texts, some with a
/// leading space.
pub fn random_vocab(g: &Grammar, rng: &mut impl Rng) -> Vocabulary {
    let texts: Vec<&str> = g.terminals().iter().map(|t| t.text.as_str()).collect();
    let mut pieces: BTreeSet<String> = texts.iter().flat_map(|t| t.chars()).map(String::from).collect();
    pieces.insert(" ".into());
    let extra = rng.gen_range(0..300);
    for _ in 0..extra {
        let t: Vec<char> = texts.choose(rng).unwrap().chars().collect();
        let a = rng.gen_range(0..t.len());
        let b = rng.gen_range(a + 1..=t.len());
        let s: String = t[a..b].iter().collect();
        pieces.insert(if rng.gen_bool(0.4) { format!(" {s}") } else { s });
    }
    let mut all = vec!["</s>".to_string()];
    all.extend(pieces);
    Vocabulary::from_pieces(all).unwrap()
}

#[derive(Debug, Default)]
pub struct TrieReport {
    pub instances: usize,
    pub queries: usize,
    pub mismatches: Vec<String>,
}

/// One randomized instance: a P* made of terminal texts, a random
/// candidate set, and histories cut from the candidates' tokenizations
/// plus a few arbitrary ones.
pub fn instance(g: &Grammar, vocab: &Vocabulary, rng: &mut impl Rng, report: &mut TrieReport) {
    let terms = g.terminals();
    let words = rng.gen_range(0..5);
    let pstar: Vec<&str> = (0..words).map(|_| terms.choose(rng).unwrap().text.as_str()).collect();
    let pstar = pstar.join(" ");
    let size = rng.gen_range(0..25);
    let nexts: BTreeSet<SqlTerminal> = terms.choose_multiple(rng, size).cloned().collect();
    let trie = build_step_trie(&pstar, &nexts, vocab);
    let mut queries: Vec<Vec<PieceId>> = Vec::new();
    for n in &nexts {
        let c = if pstar.is_empty() { n.text.clone() } else { format!("{pstar} {}", n.text) };
        let s = vocab.tokenize(&c);
        for cut in 0..=s.len() {
            queries.push(s[..cut].to_vec());
        }
    }
    for _ in 0..5 {
        let len = rng.gen_range(0..6);
        queries.push((0..len).map(|_| rng.gen_range(1..vocab.len() as PieceId)).collect());
    }
    for q in &queries {
        let got = allowed_next_pieces(&trie, q);
        let want = brute(&pstar, &nexts, vocab, q);
        if got != want && report.mismatches.len() < 20 {
            report.mismatches.push(format!("P*={pstar:?} q={q:?}: got {got:?} want {want:?}"));
        }
    }
    report.instances += 1;
    report.queries += queries.len();
}
