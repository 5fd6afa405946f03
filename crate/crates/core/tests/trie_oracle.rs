mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqlgate::tokenizer::{build_step_trie, Vocabulary};

#[test]
fn trie_matches_brute_force_with_derived_vocab() {
    let g = common::grammar("concert_singer");
    let v = Vocabulary::derived(&g, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut r = common::trie::TrieReport::default();
    for _ in 0..200 {
        common::trie::instance(&g, &v, &mut rng, &mut r);
    }
    assert!(r.mismatches.is_empty(), "{:#?}", r.mismatches);
}

#[test]
fn trie_matches_brute_force_with_random_vocabs() {
    let g = common::grammar("toy");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut r = common::trie::TrieReport::default();
    for _ in 0..20 {
        let v = common::trie::random_vocab(&g, &mut rng);
        for _ in 0..10 {
            common::trie::instance(&g, &v, &mut rng, &mut r);
        }
    }
    assert_eq!(r.instances, 200);
    assert!(r.mismatches.is_empty(), "{:#?}", r.mismatches);
}

#[test]
fn trie_is_deterministic() {
    let g = common::grammar("toy");
    let v = Vocabulary::derived(&g, 300);
    let nexts = g.terminals().iter().take(30).cloned().collect();
    let a = build_step_trie("from user", &nexts, &v);
    let b = build_step_trie("from user", &nexts, &v);
    assert_eq!(a.node_count(), b.node_count());
    assert_eq!(a.children(0).collect::<Vec<_>>(), b.children(0).collect::<Vec<_>>());
}
