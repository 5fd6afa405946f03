//! The synthetic ranker-data set: twenty questions over the concert
//! schema, a bigram scorer trained on the gold corpus and the corpus as
//! the same-database pool.

use std::sync::Arc;

use sqlgate::decoder::Decoder;
use sqlgate::grammar::{augment_with, base_grammar, TerminalPools};
use sqlgate::rankdata::{build_rank_dataset, Label, PoolQuery, RankGroup, RankInput, Source, GROUP_SIZE};
use sqlgate::schema::AliasMap;
use sqlgate::scorer::NgramScorer;
use sqlgate::session::{build_decoder, question_pools};
use sqlgate::sqlcmp::{normalize, NormalizeOptions};
use sqlgate::tokenizer::Vocabulary;

pub struct RankSet {
    pub questions: Vec<(String, String)>,
    pub decoders: Vec<Decoder>,
    pub scorer: NgramScorer,
    pub pool: Vec<PoolQuery>,
}

pub fn rank_set() -> RankSet {
    let questions: Vec<(String, String)> = super::read_fixture("rank_inputs.jsonl")
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["nl"].as_str().unwrap().to_string(), v["gold"].as_str().unwrap().to_string())
        })
        .collect();
    let schema = super::schema("concert_singer");
    let pools: Vec<TerminalPools> = questions.iter().map(|(nl, g)| question_pools(nl).with_literals_of(g)).collect();
    let union = pools
        .iter()
        .fold(TerminalPools::default(), |a, p| a.with_strings(&p.strings).with_numbers(&p.numbers));
    let vocab = Arc::new(Vocabulary::derived(
        &augment_with(&base_grammar(), &schema, &AliasMap::new(), &union),
        1000,
    ));
    let decoders = pools.iter().map(|p| build_decoder(&schema, p, Some(vocab.clone())).unwrap()).collect();
    let corpus = super::read_fixture("gold_concert_singer.sql");
    let scorer = NgramScorer::train(&corpus, &vocab);
    let pool = corpus
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| PoolQuery {
            schema: schema.name.clone(),
            sql: l.trim().to_string(),
        })
        .collect();
    RankSet {
        questions,
        decoders,
        scorer,
        pool,
    }
}

pub fn build(set: &RankSet, seed: u64) -> Vec<RankGroup> {
    let inputs: Vec<RankInput> = set
        .questions
        .iter()
        .zip(&set.decoders)
        .map(|((nl, gold), d)| RankInput {
            nl: nl.clone(),
            gold: gold.clone(),
            decoder: d,
        })
        .collect();
    build_rank_dataset(&inputs, &set.scorer, &set.pool, seed, 96).unwrap()
}

/// Problems with the groups: sizes, labels and hard-negative order.
pub fn problems(set: &RankSet, groups: &[RankGroup]) -> Vec<String> {
    let o = NormalizeOptions::default();
    let mut out = Vec::new();
    if groups.len() != set.questions.len() {
        out.push(format!("{} groups", groups.len()));
    }
    for (i, (g, (_, gold))) in groups.iter().zip(&set.questions).enumerate() {
        let gold_norm = normalize(gold, o).unwrap();
        if g.examples.len() != GROUP_SIZE {
            out.push(format!("group {i}: size {}", g.examples.len()));
        }
        let pos: Vec<_> = g.examples.iter().filter(|e| e.label == Label::Positive).collect();
        if pos.len() != 1 || normalize(&pos[0].sql, o).unwrap() != gold_norm {
            out.push(format!("group {i}: {} positives", pos.len()));
        }
        if g.examples.iter().any(|e| e.label == Label::Negative && normalize(&e.sql, o).unwrap() == gold_norm) {
            out.push(format!("group {i}: gold labelled negative"));
        }
        let injected = g.examples.iter().filter(|e| e.source == Source::GoldInjected).count();
        let beam = g.examples.iter().filter(|e| e.source == Source::Beam).count();
        if (injected, beam) != (1, 11) && (injected, beam) != (0, 12) {
            out.push(format!("group {i}: {injected} injected, {beam} from the beam"));
        }
        if g.examples.iter().filter(|e| e.source == Source::SameDb).count() != 2 {
            out.push(format!("group {i}: extras"));
        }
        let kept = g
            .examples
            .iter()
            .filter(|e| e.source == Source::Beam)
            .map(|e| e.ted_to_gold)
            .fold(f64::NEG_INFINITY, f64::max);
        if let Some(d) = g.discarded.iter().map(|d| d.1).reduce(f64::min) {
            if d < kept {
                out.push(format!("group {i}: discarded at {d} below kept {kept}"));
            }
        }
        if g.examples.iter().any(|e| e.nl.is_empty()) {
            out.push(format!("group {i}: empty question"));
        }
    }
    out
}
