//! Grammar-constrained decoding of from-first SQL.

pub mod beam;
pub mod cli;
pub mod decoder;
pub mod grammar;
pub mod lexer;
pub mod parser;
pub mod rankdata;
pub mod scorer;
pub mod schema;
pub mod scoring;
pub mod session;
pub mod sqlcmp;
pub mod tokenizer;
