mod common;

use common::rollout::{rollout, sound, Rollout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqlgate::decoder::filter_wrong_tokens;
use sqlgate::parser::{next_terminals, ParserState};
use sqlgate::schema::AliasMap;
use sqlgate::sqlcmp::check_scope;

#[test]
fn random_rollouts_are_sound() {
    for (i, name) in common::SCHEMAS.iter().enumerate() {
        let d = common::decoder(name);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut finished = 0;
        for _ in 0..300 {
            match rollout(&d, 256, &mut rng) {
                Rollout::Finished(sql) => {
                    finished += 1;
                    sound(&d, &sql).unwrap_or_else(|e| panic!("{name}: {sql}: {e}"));
                }
                Rollout::Truncated(_) => {}
                Rollout::DeadEnd(p) => panic!("{name}: dead end at {p:?}"),
            }
        }
        assert!(finished > 200, "{name}: {finished}");
    }
}

fn enumerate(g: &sqlgate::grammar::Grammar, st: ParserState, depth: usize, out: &mut Vec<String>) {
    let nexts = filter_wrong_tokens(&st, &next_terminals(&st, g), g.schema().unwrap(), &AliasMap::new());
    for t in &nexts {
        if t.is_end() {
            out.push(st.consumed().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "));
        } else if depth > 0 {
            enumerate(g, st.push(g, t).unwrap(), depth - 1, out);
        }
    }
}

#[test]
fn short_sentences_only_use_schema_names() {
    let g = common::grammar("toy");
    let schema = g.schema().unwrap().clone();
    let mut out = Vec::new();
    enumerate(&g, ParserState::initial(&g), 8, &mut out);
    assert!(out.len() > 100, "{}", out.len());
    for sql in &out {
        check_scope(sql, &schema).unwrap_or_else(|e| panic!("{sql}: {e}"));
        assert!(sql.starts_with("from "), "{sql}");
    }
}
