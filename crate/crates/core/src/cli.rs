//! Command-line front end. Every command writes JSON records, one per line,
//! to stdout and diagnostics to stderr.
//!
//! Exit codes: 0 success or match, 1 no match or out-of-scope query,
//! 2 parse error, non-viable prefix or bad input, 3 every candidate truncated.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::beam::beam_search;
use crate::decoder::{DecodeError, Decoder, Invalid};
use crate::grammar::{augment_with, base_grammar, TerminalPools};
use crate::parser::ParseError;
use crate::rankdata::{build_rank_dataset, PoolQuery, RankInput};
use crate::schema::{AliasMap, SchemaSpec};
use crate::scorer::{from_spec, RandomScorer, Scorer};
use crate::scoring::{rerank, rerank_with, HeuristicRanker, ScoreParams, DEFAULT_LAMBDA};
use crate::session::{build_decoder, question_pools, read_schema, read_vocab, Session, DEFAULT_VOCAB_SIZE};
use crate::sqlcmp::{exact_match, normalize, ted, to_tree_with, NormalizeOptions, TedCosts};
use crate::tokenizer::{PieceId, Vocabulary};

#[derive(Debug, Parser)]
#[command(name = "sqlgate", version, about = "Grammar-constrained decoding of from-first SQL")]
pub struct Cli {
    /// Schema file (JSON).
    #[arg(long, env = "SQLGATE_SCHEMA", global = true)]
    pub schema: Option<PathBuf>,
    /// Vocabulary file, one piece per line; derived from the grammar if absent.
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Beam size.
    #[arg(short = 'k', long = "beam-size", default_value_t = 4, global = true)]
    pub k: usize,
    /// Maximum pieces per hypothesis, the end-marker included.
    #[arg(long, default_value_t = 128, global = true)]
    pub limit: usize,
    /// Weight of the ranker log-probability.
    #[arg(long, default_value_t = DEFAULT_LAMBDA, global = true)]
    pub lambda: f64,
    /// Replace literals with a placeholder before comparing.
    #[arg(long, global = true)]
    pub anonymize: bool,
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Print the grammar (augmented when a schema is given) as BNF and exit.
    #[arg(long)]
    pub print_grammar: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Text arguments starting with `@` are read from the named file.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Allowed next terminals and pieces after a prefix.
    Tokens {
        #[arg(default_value = "")]
        prefix: String,
        /// Comma-separated piece-id history instead of a text prefix.
        #[arg(long, conflicts_with = "prefix")]
        ids: Option<String>,
    },
    /// Beam-decode a question and rerank the candidates.
    Decode {
        nl: String,
        /// uniform | random | ngram:<path> | trace:<path>
        #[arg(long, default_value = "uniform")]
        scorer: String,
        /// JSONL of {"id": candidate index, "p": probability}.
        #[arg(long)]
        ranker_scores: Option<PathBuf>,
    },
    /// Rerank external candidates given as JSONL of {"sql", "logp", "t"}.
    Rerank {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        ranker_scores: PathBuf,
    },
    /// Check a query against the grammar and its scoping rules.
    Validate { sql: String },
    /// Canonical form of a query.
    Normalize { sql: String },
    /// Exact match of two queries after normalization.
    Em { a: String, b: String },
    /// Tree edit distance of two queries.
    Ted { a: String, b: String },
    /// Ranker training groups as JSONL.
    Rankdata {
        /// JSONL of {"nl", "gold"}.
        #[arg(long)]
        inputs: PathBuf,
        /// Same-database queries, one per line.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "uniform")]
        scorer: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Validated run settings.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub schema_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub k: usize,
    pub limit: usize,
    pub params: ScoreParams,
    pub anonymize: bool,
    pub seed: u64,
}

impl CliConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, Failure> {
        if cli.k == 0 {
            return Err(Failure::usage("-k must be at least 1"));
        }
        if cli.limit == 0 {
            return Err(Failure::usage("--limit must be at least 1"));
        }
        let params = ScoreParams::new(cli.lambda).map_err(|e| Failure::usage(e.to_string()))?;
        Ok(CliConfig {
            schema_path: cli.schema.clone(),
            vocab_path: cli.vocab.clone(),
            k: cli.k,
            limit: cli.limit,
            params,
            anonymize: cli.anonymize,
            seed: cli.seed,
        })
    }

    fn norm_opts(&self) -> NormalizeOptions {
        NormalizeOptions {
            anonymize_terminals: self.anonymize,
        }
    }

    fn schema(&self) -> Result<SchemaSpec, Failure> {
        let path = self
            .schema_path
            .as_ref()
            .ok_or_else(|| Failure::usage("no schema: pass --schema or set SQLGATE_SCHEMA"))?;
        read_schema(path).map_err(Failure::input)
    }

    fn vocab(&self) -> Result<Option<Arc<Vocabulary>>, Failure> {
        self.vocab_path
            .as_deref()
            .map(|p| read_vocab(p).map(Arc::new).map_err(Failure::input))
            .transpose()
    }

    fn decoder(&self, schema: &SchemaSpec, pools: &TerminalPools) -> Result<Decoder, Failure> {
        build_decoder(schema, pools, self.vocab()?).map_err(Failure::input)
    }

    fn scorer(&self, spec: &str, vocab: &Vocabulary) -> Result<Box<dyn Scorer>, Failure> {
        if spec == "random" {
            return Ok(Box::new(RandomScorer::new(vocab, self.seed)));
        }
        from_spec(spec, vocab).map_err(|e| Failure::usage(format!("scorer {spec}: {e}")))
    }
}

/// A command outcome other than plain success.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub records: Vec<Value>,
}

impl Failure {
    fn usage(m: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: m.into(),
            records: Vec::new(),
        }
    }

    fn input(e: impl std::fmt::Display) -> Self {
        Self::usage(e.to_string())
    }

    fn with(code: u8, message: impl Into<String>, record: Value) -> Self {
        Self::with_all(code, message, vec![record])
    }

    fn with_all(code: u8, message: impl Into<String>, records: Vec<Value>) -> Self {
        Failure {
            code,
            message: message.into(),
            records,
        }
    }
}

fn text_arg(s: &str) -> Result<String, Failure> {
    match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map(|t| t.trim_end_matches(['\n', '\r']).to_string())
            .map_err(|e| Failure::usage(format!("{path}: {e}"))),
        None => Ok(s.to_string()),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Failure> {
    read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Failure::usage(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

#[derive(Deserialize)]
struct RankerScore {
    id: usize,
    p: f64,
}

fn ranker_probs(path: &Path, n: usize) -> Result<Vec<f64>, Failure> {
    let scores: HashMap<usize, f64> = jsonl::<RankerScore>(path)?.into_iter().map(|r| (r.id, r.p)).collect();
    (0..n)
        .map(|i| {
            scores
                .get(&i)
                .copied()
                .ok_or_else(|| Failure::usage(format!("{}: no score for candidate {i}", path.display())))
        })
        .collect()
}

fn not_viable(index: usize) -> Failure {
    Failure::with(
        2,
        format!("not a viable prefix at terminal {index}"),
        json!({"error": "not-a-viable-prefix", "index": index}),
    )
}

fn decode_failure(e: DecodeError) -> Failure {
    match e {
        DecodeError::Parse(ParseError::NotAViablePrefix { index }) => not_viable(index),
        DecodeError::IllegalPiece { piece } => Failure::with(
            2,
            format!("piece {piece} is not allowed"),
            json!({"error": "illegal-piece", "piece": piece}),
        ),
        other => Failure::usage(other.to_string()),
    }
}

fn parse_failure(e: impl std::fmt::Display) -> Failure {
    let m = e.to_string();
    Failure::with(2, m.clone(), json!({"error": "parse", "message": m}))
}

fn cmd_tokens(cfg: &CliConfig, prefix: &str, ids: Option<&str>) -> Result<Vec<Value>, Failure> {
    let schema = cfg.schema()?;
    let session = Session::new(cfg.decoder(&schema, &TerminalPools::default())?);
    let d = session.decoder();
    let state = match ids {
        Some(list) => {
            let ids: Vec<PieceId> = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Failure::usage(format!("bad piece id {s}"))))
                .collect::<Result<_, _>>()?;
            session.state(&ids).map_err(decode_failure)?
        }
        None => d.state_for_text(&text_arg(prefix)?).map_err(decode_failure)?,
    };
    let (terminals, pieces): (Vec<String>, Vec<PieceId>) = if state.finished {
        (Vec::new(), Vec::new())
    } else {
        let step = d.step(&state);
        (step.terminals.into_iter().map(|t| t.text).collect(), step.pieces.into_iter().collect())
    };
    let spelled: Vec<&str> = pieces.iter().map(|&i| d.vocab().piece(i).unwrap_or("")).collect();
    Ok(vec![json!({
        "prefix": state.p,
        "terminals": terminals,
        "ids": pieces,
        "pieces": spelled,
    })])
}

fn cmd_decode(cfg: &CliConfig, nl: &str, scorer: &str, ranker_scores: Option<&Path>) -> Result<Vec<Value>, Failure> {
    let nl = text_arg(nl)?;
    let schema = cfg.schema()?;
    let d = cfg.decoder(&schema, &question_pools(&nl))?;
    let scorer = cfg.scorer(scorer, d.vocab())?;
    let result = beam_search(&d, scorer.as_ref(), cfg.k, cfg.limit).map_err(Failure::input)?;
    let ranked = match ranker_scores {
        Some(path) => rerank_with(&result, &ranker_probs(path, result.candidates.len())?, &cfg.params),
        None => rerank(&result, &nl, &HeuristicRanker::new(&schema), &cfg.params),
    }
    .map_err(Failure::input)?;
    let records: Vec<Value> = ranked
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            json!({
                "rank": rank,
                "index": r.index,
                "sql": r.sql,
                "logp": r.logp,
                "t": r.t,
                "ranker_p": r.ranker_p,
                "combined": r.combined,
                "valid": r.valid,
                "truncated": r.truncated,
            })
        })
        .collect();
    if ranked.iter().all(|r| r.truncated) {
        return Err(Failure::with_all(3, "every candidate was truncated", records));
    }
    if !ranked.first().is_some_and(|r| r.valid) {
        return Err(Failure::with_all(1, "top candidate is not valid", records));
    }
    Ok(records)
}

#[derive(Deserialize)]
struct ExternalCandidate {
    sql: String,
    logp: f64,
    t: usize,
}

fn cmd_rerank(cfg: &CliConfig, candidates: &Path, scores: &Path) -> Result<Vec<Value>, Failure> {
    let schema = cfg.schema()?;
    let session = Session::new(cfg.decoder(&schema, &TerminalPools::default())?).with_params(cfg.params);
    let cands: Vec<(String, f64, usize)> = jsonl::<ExternalCandidate>(candidates)?
        .into_iter()
        .map(|c| (c.sql, c.logp, c.t))
        .collect();
    let probs = ranker_probs(scores, cands.len())?;
    let order = session.rerank(&cands, &probs).map_err(Failure::input)?;
    Ok(vec![json!({ "order": order })])
}

fn cmd_validate(cfg: &CliConfig, sql: &str) -> Result<Vec<Value>, Failure> {
    let sql = text_arg(sql)?;
    let schema = cfg.schema()?;
    let d = cfg.decoder(&schema, &TerminalPools::default().with_literals_of(&sql))?;
    match d.validate(&sql) {
        Ok(()) => Ok(vec![json!({"valid": true})]),
        Err(Invalid::Syntax { index }) => Err(Failure::with(
            2,
            format!("terminal {index} does not parse"),
            json!({"valid": false, "error": "syntax", "index": index}),
        )),
        Err(Invalid::Incomplete) => Err(Failure::with(
            2,
            "query is incomplete",
            json!({"valid": false, "error": "incomplete"}),
        )),
        Err(Invalid::OutOfScope { index, text }) => Err(Failure::with(
            1,
            format!("{text} is not in scope"),
            json!({"valid": false, "error": "out-of-scope", "index": index, "text": text}),
        )),
    }
}

fn cmd_ted(cfg: &CliConfig, a: &str, b: &str) -> Result<Vec<Value>, Failure> {
    let (a, b) = (text_arg(a)?, text_arg(b)?);
    let ta = to_tree_with(&a, cfg.norm_opts()).map_err(parse_failure)?;
    let tb = to_tree_with(&b, cfg.norm_opts()).map_err(parse_failure)?;
    Ok(vec![json!({"ted": ted(&ta, &tb, &TedCosts::default())})])
}

#[derive(Deserialize)]
struct InputRecord {
    nl: String,
    gold: String,
}

fn cmd_rankdata(cfg: &CliConfig, inputs: &Path, pool: &Path, scorer: &str, out: Option<&Path>) -> Result<Vec<Value>, Failure> {
    let schema = cfg.schema()?;
    let records: Vec<InputRecord> = jsonl(inputs)?;
    let pool: Vec<PoolQuery> = read_file(pool)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|sql| PoolQuery {
            schema: schema.name.clone(),
            sql: sql.to_string(),
        })
        .collect();
    let pools: Vec<TerminalPools> = records
        .iter()
        .map(|r| question_pools(&r.nl).with_literals_of(&r.gold))
        .collect();
    // One vocabulary for every input so a single scorer serves them all.
    let vocab = match cfg.vocab()? {
        Some(v) => v,
        None => {
            let union = pools.iter().fold(TerminalPools::default(), |acc, p| {
                acc.with_strings(&p.strings).with_numbers(&p.numbers)
            });
            let g = augment_with(&base_grammar(), &schema, &AliasMap::new(), &union);
            Arc::new(Vocabulary::derived(&g, DEFAULT_VOCAB_SIZE))
        }
    };
    let decoders: Vec<Decoder> = pools
        .iter()
        .map(|p| build_decoder(&schema, p, Some(vocab.clone())).map_err(Failure::input))
        .collect::<Result<_, _>>()?;
    let inputs: Vec<RankInput<'_>> = records
        .iter()
        .zip(&decoders)
        .map(|(r, d)| RankInput {
            nl: r.nl.clone(),
            gold: r.gold.clone(),
            decoder: d,
        })
        .collect();
    let scorer = cfg.scorer(scorer, &vocab)?;
    let groups = build_rank_dataset(&inputs, scorer.as_ref(), &pool, cfg.seed, cfg.limit).map_err(Failure::input)?;
    let mut lines = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if g.underflow {
            eprintln!("group {i}: fewer than 16 distinct candidates, using all {}", g.examples.len());
        }
        for e in &g.examples {
            lines.push(serde_json::to_value(e).expect("examples serialize"));
        }
    }
    match out {
        Some(path) => {
            let mut text = String::new();
            for l in &lines {
                text.push_str(&l.to_string());
                text.push('\n');
            }
            std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {} examples in {} groups to {}", lines.len(), groups.len(), path.display());
            Ok(Vec::new())
        }
        None => Ok(lines),
    }
}

fn print_records(records: &[Value]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in records {
        let _ = writeln!(out, "{r}");
    }
}

/// Runs one parsed invocation, returning the records to print.
pub fn execute(cli: &Cli) -> Result<Vec<Value>, Failure> {
    let cfg = CliConfig::from_cli(cli)?;
    if cli.print_grammar {
        let g = match &cfg.schema_path {
            Some(_) => augment_with(&base_grammar(), &cfg.schema()?, &AliasMap::new(), &TerminalPools::default()),
            None => base_grammar(),
        };
        print!("{}", g.to_bnf());
        return Ok(Vec::new());
    }
    let Some(command) = &cli.command else {
        return Err(Failure::usage("no command given; see --help"));
    };
    match command {
        Command::Tokens { prefix, ids } => cmd_tokens(&cfg, prefix, ids.as_deref()),
        Command::Decode {
            nl,
            scorer,
            ranker_scores,
        } => cmd_decode(&cfg, nl, scorer, ranker_scores.as_deref()),
        Command::Rerank {
            candidates,
            ranker_scores,
        } => cmd_rerank(&cfg, candidates, ranker_scores),
        Command::Validate { sql } => cmd_validate(&cfg, sql),
        Command::Normalize { sql } => {
            let n = normalize(&text_arg(sql)?, cfg.norm_opts()).map_err(parse_failure)?;
            Ok(vec![json!({"sql": n})])
        }
        Command::Em { a, b } => {
            let m = exact_match(&text_arg(a)?, &text_arg(b)?, cfg.norm_opts()).map_err(parse_failure)?;
            if m {
                Ok(vec![json!({"match": true})])
            } else {
                Err(Failure::with(1, "queries differ", json!({"match": false})))
            }
        }
        Command::Ted { a, b } => cmd_ted(&cfg, a, b),
        Command::Rankdata {
            inputs,
            pool,
            scorer,
            out,
        } => cmd_rankdata(&cfg, inputs, pool, scorer, out.as_deref()),
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(records) => {
            print_records(&records);
            ExitCode::SUCCESS
        }
        Err(f) => {
            print_records(&f.records);
            eprintln!("sqlgate: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
