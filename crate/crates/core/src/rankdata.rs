//! Ranker training groups: beam candidates, hard negatives by tree edit
//! distance to the gold query, gold injection and same-database extras.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::beam::{beam_search, BeamError};
use crate::decoder::Decoder;
use crate::scorer::Scorer;
use crate::scoring::bridge_terminals;
use crate::sqlcmp::{normalize, ted, to_tree, NormalizeOptions, ParseError, SqlTree, TedCosts};

pub const BEAM_SIZE: usize = 16;
pub const KEEP: usize = 12;
pub const EXTRAS: usize = 2;
pub const GROUP_SIZE: usize = KEEP + EXTRAS;

#[derive(Debug, Error)]
pub enum RankDataError {
    #[error("group {group}: gold query does not parse: {source}")]
    GoldParse { group: usize, source: ParseError },
    #[error("group {group}: fewer than {EXTRAS} usable pool queries for schema {schema}")]
    PoolTooSmall { group: usize, schema: String },
    #[error("group {group}: {source}")]
    Beam { group: usize, source: BeamError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Beam,
    GoldInjected,
    SameDb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankExample {
    pub group: usize,
    pub nl: String,
    pub sql: String,
    pub label: Label,
    pub ted_to_gold: f64,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct RankGroup {
    pub examples: Vec<RankExample>,
    /// Fewer than [`BEAM_SIZE`] distinct finished candidates were found;
    /// all of them were used.
    pub underflow: bool,
    /// Beam candidates left out, with their distance to the gold query.
    pub discarded: Vec<(String, f64)>,
}

pub struct RankInput<'a> {
    pub nl: String,
    pub gold: String,
    pub decoder: &'a Decoder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolQuery {
    pub schema: String,
    pub sql: String,
}

#[derive(Debug, Clone)]
pub struct Measured {
    pub sql: String,
    pub norm: String,
    pub ted: f64,
}

fn by_ted(a: &Measured, b: &Measured) -> std::cmp::Ordering {
    a.ted.total_cmp(&b.ted).then_with(|| a.norm.cmp(&b.norm))
}

fn score_against(sql: &str, gold_tree: &SqlTree, costs: &TedCosts) -> Option<Measured> {
    let norm = normalize(sql, NormalizeOptions::default()).ok()?;
    let tree = to_tree(sql).ok()?;
    Some(Measured {
        sql: sql.to_string(),
        norm,
        ted: ted(&tree, gold_tree, costs),
    })
}

/// Builds one group from already scored beam candidates and pool queries.
/// `beam` must hold distinct normalized queries.
pub fn assemble_group(
    group: usize,
    nl: &str,
    gold: &Measured,
    mut beam: Vec<Measured>,
    mut pool: Vec<Measured>,
    seed: u64,
) -> Option<RankGroup> {
    let underflow = beam.len() < BEAM_SIZE;
    beam.sort_by(by_ted);
    let mut discarded: Vec<(String, f64)> = beam.split_off(beam.len().min(KEEP)).into_iter().map(|s| (s.sql, s.ted)).collect();
    let nl = bridge_terminals(nl);
    let example = |s: &Measured, label, source| RankExample {
        group,
        nl: nl.clone(),
        sql: s.sql.clone(),
        label,
        ted_to_gold: s.ted,
        source,
    };
    let gold_in_beam = beam.iter().any(|s| s.norm == gold.norm);
    let mut examples: Vec<RankExample> = Vec::with_capacity(GROUP_SIZE);
    if !gold_in_beam && beam.len() == KEEP {
        let dropped = beam.pop().expect("KEEP > 0");
        discarded.insert(0, (dropped.sql, dropped.ted));
    }
    for s in &beam {
        let label = if s.norm == gold.norm { Label::Positive } else { Label::Negative };
        examples.push(example(s, label, Source::Beam));
    }
    if !gold_in_beam {
        examples.push(example(gold, Label::Positive, Source::GoldInjected));
    }
    pool.retain(|p| p.norm != gold.norm && !beam.iter().any(|b| b.norm == p.norm));
    pool.sort_by(by_ted);
    pool.dedup_by(|a, b| a.norm == b.norm);
    if pool.len() < EXTRAS {
        return None;
    }
    for s in &pool[..EXTRAS] {
        examples.push(example(s, Label::Negative, Source::SameDb));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((group as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    examples.shuffle(&mut rng);
    Some(RankGroup {
        examples,
        underflow,
        discarded,
    })
}

/// Builds one group per input. Pool queries are matched to inputs by
/// schema name.
pub fn build_rank_dataset(
    inputs: &[RankInput<'_>],
    scorer: &dyn Scorer,
    pool: &[PoolQuery],
    seed: u64,
    limit: usize,
) -> Result<Vec<RankGroup>, RankDataError> {
    let costs = TedCosts::default();
    let mut out = Vec::with_capacity(inputs.len());
    for (group, input) in inputs.iter().enumerate() {
        let gold_tree = to_tree(&input.gold).map_err(|source| RankDataError::GoldParse { group, source })?;
        let gold = score_against(&input.gold, &gold_tree, &costs).expect("gold parsed above");
        let result = beam_search(input.decoder, scorer, BEAM_SIZE, limit)
            .map_err(|source| RankDataError::Beam { group, source })?;
        let mut beam: Vec<Measured> = Vec::new();
        for c in result.candidates.iter().filter(|c| c.is_valid()) {
            if let Some(s) = score_against(c.text(), &gold_tree, &costs) {
                if !beam.iter().any(|b| b.norm == s.norm) {
                    beam.push(s);
                }
            }
        }
        let schema = &input.decoder.schema().name;
        let pool: Vec<Measured> = pool
            .iter()
            .filter(|p| &p.schema == schema)
            .filter_map(|p| score_against(&p.sql, &gold_tree, &costs))
            .collect();
        let g = assemble_group(group, &input.nl, &gold, beam, pool, seed).ok_or_else(|| RankDataError::PoolTooSmall {
            group,
            schema: schema.clone(),
        })?;
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(sql: &str, ted: f64) -> Measured {
        Measured {
            sql: sql.into(),
            norm: sql.into(),
            ted,
        }
    }

    fn beam_of(n: usize) -> Vec<Measured> {
        (0..n).map(|i| scored(&format!("q{i:02}"), (i + 1) as f64)).collect()
    }

    fn pool() -> Vec<Measured> {
        vec![scored("p1", 3.0), scored("p2", 1.0), scored("p3", 2.0)]
    }

    #[test]
    fn gold_absent_is_injected() {
        let gold = scored("gold", 0.0);
        let g = assemble_group(0, "nl 'x'", &gold, beam_of(16), pool(), 1).unwrap();
        assert_eq!(g.examples.len(), GROUP_SIZE);
        let injected: Vec<_> = g.examples.iter().filter(|e| e.source == Source::GoldInjected).collect();
        assert_eq!(injected.len(), 1);
        assert_eq!(injected[0].label, Label::Positive);
        assert_eq!(g.examples.iter().filter(|e| e.source == Source::Beam).count(), 11);
        assert!(g.examples.iter().all(|e| e.nl == "nl 'x' | x"));
        let extras: Vec<&str> = {
            let mut v: Vec<&str> = g.examples.iter().filter(|e| e.source == Source::SameDb).map(|e| e.sql.as_str()).collect();
            v.sort();
            v
        };
        assert_eq!(extras, ["p2", "p3"]);
        assert!(!g.underflow);
    }

    #[test]
    fn gold_present_is_not_injected() {
        let gold = scored("q03", 0.0);
        let mut beam = beam_of(16);
        beam[3].ted = 0.0;
        let g = assemble_group(0, "nl", &gold, beam, pool(), 1).unwrap();
        assert_eq!(g.examples.len(), GROUP_SIZE);
        assert_eq!(g.examples.iter().filter(|e| e.source == Source::Beam).count(), 12);
        let pos: Vec<_> = g.examples.iter().filter(|e| e.label == Label::Positive).collect();
        assert_eq!(pos.len(), 1);
        assert_eq!(pos[0].sql, "q03");
    }

    #[test]
    fn underflow_uses_all() {
        let gold = scored("gold", 0.0);
        let g = assemble_group(0, "nl", &gold, beam_of(5), pool(), 1).unwrap();
        assert!(g.underflow);
        assert_eq!(g.examples.len(), 5 + 1 + 2);
    }

    #[test]
    fn small_pool_fails() {
        let gold = scored("gold", 0.0);
        assert!(assemble_group(0, "nl", &gold, beam_of(16), vec![scored("p", 1.0), scored("gold", 0.0)], 1).is_none());
    }

    #[test]
    fn seed_controls_order_only() {
        let gold = scored("gold", 0.0);
        let a = assemble_group(0, "nl", &gold, beam_of(16), pool(), 1).unwrap();
        let b = assemble_group(0, "nl", &gold, beam_of(16), pool(), 1).unwrap();
        let c = assemble_group(0, "nl", &gold, beam_of(16), pool(), 2).unwrap();
        assert_eq!(a.examples, b.examples);
        let mut x: Vec<String> = a.examples.iter().map(|e| e.sql.clone()).collect();
        let mut y: Vec<String> = c.examples.iter().map(|e| e.sql.clone()).collect();
        assert_ne!(x, y);
        x.sort();
        y.sort();
        assert_eq!(x, y);
    }
}
