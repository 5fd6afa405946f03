#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use sqlgate::decoder::Decoder;
use sqlgate::grammar::{augment, base_grammar, Grammar, TerminalPools};
use sqlgate::schema::{load_schema, AliasMap, SchemaSpec};
use sqlgate::session::build_decoder;

pub const SCHEMAS: [&str; 3] = ["toy", "concert_singer", "pets"];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn schema(name: &str) -> SchemaSpec {
    load_schema(&read_fixture(&format!("{name}.json"))).unwrap()
}

pub fn grammar(name: &str) -> Grammar {
    augment(&base_grammar(), &schema(name), &AliasMap::new())
}

pub fn decoder(name: &str) -> Decoder {
    build_decoder(&schema(name), &TerminalPools::default(), None).unwrap()
}

/// Decoder whose literal pools also hold the literals of `sqls`.
pub fn decoder_with_literals(name: &str, sqls: &[String]) -> Decoder {
    let pools = sqls.iter().fold(TerminalPools::default(), |p, q| p.with_literals_of(q));
    build_decoder(&schema(name), &pools, None).unwrap()
}

pub fn decoder_with_vocab(name: &str, vocab: Arc<sqlgate::tokenizer::Vocabulary>) -> Decoder {
    build_decoder(&schema(name), &TerminalPools::default(), Some(vocab)).unwrap()
}

pub fn gold(name: &str) -> Vec<String> {
    read_fixture(&format!("gold_{name}.sql"))
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub mod lookahead;
pub mod rollout;
pub mod tree;
pub mod trie;
pub mod listing;
pub mod rank;
