mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use sqlgate::beam::{beam_search, masked_distribution, masked_probabilities};
use sqlgate::decoder::Decoder;
use sqlgate::grammar::{augment, base_grammar};
use sqlgate::parser::{analyze_prefix, extend_analysis, PrefixAnalysis};
use sqlgate::schema::{qualified_columns, AliasMap, SchemaSpec};
use sqlgate::scorer::RandomScorer;
use sqlgate::scoring::{combined_score, rerank_order, ScoreParams, Scored};
use sqlgate::sqlcmp::{exact_match, normalize, NormalizeOptions};
use sqlgate::tokenizer::{PieceId, Vocabulary};

fn concert() -> &'static (Decoder, Vec<String>) {
    static D: OnceLock<(Decoder, Vec<String>)> = OnceLock::new();
    D.get_or_init(|| {
        let gold = common::gold("concert_singer");
        (common::decoder_with_literals("concert_singer", &gold), gold)
    })
}

fn covered_chars() -> Vec<char> {
    let g = concert().0.grammar();
    let set: BTreeSet<char> = g.terminals().iter().flat_map(|t| t.text.chars()).chain([' ']).collect();
    set.into_iter().collect()
}

fn summary(a: &PrefixAnalysis) -> (Vec<String>, Vec<usize>, bool) {
    (a.state.consumed().map(|t| t.text.clone()).collect(), a.ends.clone(), a.open_tail)
}

/// Changes letter case and widens whitespace outside string literals.
fn perturb(q: &str, flips: &[bool]) -> String {
    let mut out = String::new();
    let mut quoted = false;
    for (i, c) in q.chars().enumerate() {
        let flip = flips[i % flips.len()];
        if c == '\'' {
            quoted = !quoted;
        }
        if quoted {
            out.push(c);
        } else if c == ' ' && flip {
            out.push_str("  ");
        } else if flip {
            out.push(c.to_ascii_uppercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn scored_set() -> impl Strategy<Value = Vec<(Scored, f64)>> {
    prop::collection::vec(
        (-50.0f64..0.0, 1usize..40, any::<bool>(), 1e-6f64..=1.0).prop_map(|(logp, t, valid, p)| (Scored { logp, t, valid }, p)),
        1..12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tokenize_round_trips(cs in prop::collection::vec(prop::sample::select(covered_chars()), 0..60)) {
        let v = concert().0.vocab();
        let s: String = cs.into_iter().collect();
        prop_assert_eq!(v.detokenize(&v.tokenize(&s)), s);
    }

    #[test]
    fn incremental_analysis_matches_fresh(ix in 0usize..32, cut in 0usize..200) {
        let (d, gold) = concert();
        let q = &gold[ix % gold.len()];
        let g = d.grammar();
        let end = cut.min(q.len());
        let mut prev = analyze_prefix("", g, None).unwrap();
        for n in 1..=end {
            let p = &q[..n];
            let inc = extend_analysis(&prev, p, g).unwrap();
            let fresh = analyze_prefix(p, g, None).unwrap();
            prop_assert_eq!(summary(&inc), summary(&fresh), "{:?}", p);
            prev = inc;
        }
    }

    #[test]
    fn normalize_is_idempotent_and_case_blind(ix in 0usize..32, flips in prop::collection::vec(any::<bool>(), 1..7)) {
        let (_, gold) = concert();
        let q = &gold[ix % gold.len()];
        let o = NormalizeOptions::default();
        let n = normalize(q, o).unwrap();
        prop_assert_eq!(normalize(&n, o).unwrap(), n.clone());
        let p = perturb(q, &flips);
        prop_assert!(exact_match(q, &p, o).unwrap());
        prop_assert!(exact_match(&p, q, o).unwrap());
    }

    #[test]
    fn exact_match_is_an_equivalence(a in 0usize..32, b in 0usize..32, c in 0usize..32) {
        let (_, gold) = concert();
        let o = NormalizeOptions::default();
        let (a, b, c) = (&gold[a % gold.len()], &gold[b % gold.len()], &gold[c % gold.len()]);
        let m = |x: &str, y: &str| exact_match(x, y, o).unwrap();
        prop_assert!(m(a, a));
        prop_assert_eq!(m(a, b), m(b, a));
        if m(a, b) && m(b, c) {
            prop_assert!(m(a, c));
        }
    }

    #[test]
    fn zero_lambda_ignores_the_ranker(set in scored_set(), other in prop::collection::vec(1e-6f64..=1.0, 12)) {
        let items: Vec<Scored> = set.iter().map(|s| s.0).collect();
        let probs: Vec<f64> = set.iter().map(|s| s.1).collect();
        let alt = &other[..items.len()];
        let p0 = ScoreParams::new(0.0).unwrap();
        prop_assert_eq!(rerank_order(&items, &probs, &p0).unwrap(), rerank_order(&items, alt, &p0).unwrap());
    }

    #[test]
    fn combined_score_is_monotone(logp in -50.0f64..0.0, t in 1usize..50, p in 1e-6f64..0.5, lambda in 0.0f64..1.0, dl in 0.0f64..5.0) {
        let params = ScoreParams::new(lambda).unwrap();
        let base = combined_score(logp, t, p, &params).unwrap();
        prop_assert!(combined_score(logp, t, p * 2.0, &params).unwrap() >= base);
        prop_assert!(combined_score(logp + dl, t, p, &params).unwrap() >= base);
    }

    #[test]
    fn raising_ranker_probability_never_demotes(set in scored_set(), pick in 0usize..12, lambda in 0.0f64..1.0) {
        let items: Vec<Scored> = set.iter().map(|s| s.0).collect();
        let mut probs: Vec<f64> = set.iter().map(|s| s.1).collect();
        let i = pick % items.len();
        let params = ScoreParams::new(lambda).unwrap();
        let before = rerank_order(&items, &probs, &params).unwrap().iter().position(|&x| x == i).unwrap();
        probs[i] = 1.0;
        let after = rerank_order(&items, &probs, &params).unwrap().iter().position(|&x| x == i).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn invalid_items_rank_last(set in scored_set()) {
        let items: Vec<Scored> = set.iter().map(|s| s.0).collect();
        let probs: Vec<f64> = set.iter().map(|s| s.1).collect();
        let order = rerank_order(&items, &probs, &ScoreParams::default()).unwrap();
        let valid: Vec<bool> = order.iter().map(|&i| items[i].valid).collect();
        prop_assert!(valid.windows(2).all(|w| w[0] || !w[1]));
    }

    #[test]
    fn masked_distribution_sums_to_one(logps in prop::collection::vec(-30.0f64..5.0, 2..40), mask in prop::collection::vec(any::<bool>(), 40)) {
        let mut allowed: BTreeSet<PieceId> = (0..logps.len()).filter(|&i| mask[i]).map(|i| i as PieceId).collect();
        if allowed.is_empty() {
            allowed.insert(0);
        }
        let total: f64 = masked_distribution(&logps, &allowed).iter().map(|(_, lp)| lp.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let probs = masked_probabilities(&logps, &allowed);
        for (i, p) in probs.iter().enumerate() {
            if !allowed.contains(&(i as PieceId)) {
                prop_assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn qualified_columns_count(tables in prop::collection::btree_map("x[a-z]{0,5}", prop::collection::btree_set("[a-z_]{1,6}", 1..5), 1..5), bind in any::<bool>()) {
        let s = SchemaSpec::new("s", tables.iter().map(|(t, cs)| (t.as_str(), cs.iter().map(String::as_str).collect::<Vec<_>>()))).unwrap();
        let mut aliases = AliasMap::new();
        let first = s.tables()[0].clone();
        if bind && s.table("t1").is_none() {
            aliases.bind("t1", &first.name, &s).unwrap();
        }
        let cols = qualified_columns(&s, &aliases);
        let expect = s.column_count() + if aliases.is_empty() { 0 } else { first.columns.len() };
        prop_assert_eq!(cols.len(), expect);
        prop_assert_eq!(cols.iter().collect::<BTreeSet<_>>().len(), expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn beam_is_reproducible(seed in any::<u64>(), k in 1usize..4) {
        let d = common::decoder("toy");
        let s = RandomScorer::new(d.vocab(), seed);
        let a = beam_search(&d, &s, k, 48).unwrap();
        let b = beam_search(&d, &s, k, 48).unwrap();
        let key = |r: &sqlgate::beam::BeamResult| r.candidates.iter().map(|c| (c.state.p_tokens.clone(), c.logp.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(key(&a), key(&b));
    }
}

#[test]
fn augment_leaves_the_base_untouched() {
    let base = base_grammar();
    let before = base.to_bnf();
    let s = common::schema("pets");
    let a = augment(&base, &s, &AliasMap::new());
    let b = augment(&base, &s, &AliasMap::new());
    assert_eq!(base.to_bnf(), before);
    assert_eq!(a, b);
    assert_ne!(a.to_bnf(), before);
}

#[test]
fn generation_never_starts_with_select() {
    for name in common::SCHEMAS {
        let d = common::decoder(name);
        let v: &Vocabulary = d.vocab();
        let ids = d.next_token_ids(&d.initial_state()).unwrap();
        assert!(!ids.is_empty());
        for id in ids {
            let piece = v.piece(id).unwrap();
            assert!("from".starts_with(piece), "{name}: {piece:?}");
        }
    }
}
