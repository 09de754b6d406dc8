use std::collections::BTreeSet;

use proptest::prelude::*;
use trie_lookahead::baseline::{Bm25Index, Bm25Params};
use trie_lookahead::decoder::merge_ranked;
use trie_lookahead::eval::metrics::recall_at_k;
use trie_lookahead::{
    beam_search, lookahead_modify, BeamConfig, CountScorer, CountScorerConfig, Scorer, TokenId, Trie,
};

const V: usize = 9;

fn keyword() -> impl Strategy<Value = Vec<TokenId>> {
    prop::collection::vec((3u32..V as u32).prop_map(TokenId), 1..5)
}

fn keywords() -> impl Strategy<Value = Vec<Vec<TokenId>>> {
    prop::collection::vec(keyword(), 1..12)
}

fn scorer_for(pairs: &[Vec<TokenId>], beta: f64, top_k: usize) -> CountScorer {
    let pairs: Vec<_> = pairs.iter().map(|k| (k[..1].to_vec(), k.clone())).collect();
    let config = CountScorerConfig { copy_bonus_beta: beta, future_top_k: top_k, ..CountScorerConfig::default() };
    CountScorer::train(&pairs, V, config).unwrap()
}

proptest! {
    #[test]
    fn trie_enumerates_exactly_the_inserted_set(kws in keywords()) {
        let trie = Trie::build(V, kws.iter()).unwrap();
        let expected: BTreeSet<_> = kws.iter().cloned().collect();
        let got: BTreeSet<_> = trie.keywords().into_iter().collect();
        prop_assert_eq!(trie.keyword_count(), expected.len());
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn trie_bytes_roundtrip_and_ignore_insertion_order(kws in keywords()) {
        let trie = Trie::build(V, kws.iter()).unwrap();
        let reversed = Trie::build(V, kws.iter().rev()).unwrap();
        prop_assert_eq!(&trie, &reversed);
        prop_assert_eq!(&Trie::from_bytes(&trie.to_bytes()).unwrap(), &trie);
    }

    #[test]
    fn count_scorer_levels_are_normalized_and_floored(
        kws in keywords(),
        query in keyword(),
        prefix in prop::collection::vec((3u32..V as u32).prop_map(TokenId), 0..3),
        beta in 0.0f64..4.0,
    ) {
        let s = scorer_for(&kws, beta, 4);
        let pred = s.predict(&query, &prefix);
        prop_assert!(pred.check_normalized(1e-9));
        let floor = s.config().floor_logprob;
        for level in 0..pred.order() {
            prop_assert!(pred.dist(level).iter().all(|&lp| lp >= floor - 1e-9));
        }
        prop_assert_eq!(pred, s.predict(&query, &prefix));
    }

    #[test]
    fn copy_bonus_never_lowers_a_query_token(kws in keywords(), query in keyword(), beta in 0.0f64..3.0) {
        let low = scorer_for(&kws, beta, 4).predict(&query, &[]);
        let high = scorer_for(&kws, beta + 1.0, 4).predict(&query, &[]);
        for &t in &query {
            prop_assert!(high.logprob(0, t) >= low.logprob(0, t) - 1e-12);
        }
    }

    #[test]
    fn full_width_marginal_matches_exact_sum(kws in keywords(), query in keyword()) {
        let s = scorer_for(&kws, 1.0, V);
        let pred = s.predict_levels(&query, &[], 2);
        let first: Vec<f64> = pred.dist(0).iter().map(|lp| lp.exp()).collect();
        let mut exact = vec![0.0; V];
        for (v, &pv) in first.iter().enumerate() {
            let v = TokenId(v as u32);
            if v == TokenId::EOS {
                exact[v.index()] += pv;
                continue;
            }
            let next = s.predict_levels(&query, &[v], 1);
            for (w, e) in exact.iter_mut().enumerate() {
                *e += pv * next.logprob(0, TokenId(w as u32)).exp();
            }
        }
        for (w, &e) in exact.iter().enumerate() {
            prop_assert!((pred.dist(1)[w].exp() - e).abs() < 1e-6, "token {w}: {} vs {e}", pred.dist(1)[w].exp());
        }
    }

    #[test]
    fn lambda_one_is_the_masked_distribution(kws in keywords(), query in keyword()) {
        let trie = Trie::build(V, kws.iter()).unwrap();
        let s = scorer_for(&kws, 1.0, 4);
        let pred = s.predict(&query, &[]);
        let m = lookahead_modify(&pred, &trie, &[], 1.0, 3).unwrap();
        for &(t, score) in &m.entries {
            prop_assert_eq!(score, pred.logprob(0, t));
        }
        let children: Vec<_> = trie.children(trie.node(&[]).unwrap()).iter().map(|&(t, _)| t).collect();
        prop_assert_eq!(m.entries.iter().map(|&(t, _)| t).collect::<Vec<_>>(), children);
    }

    #[test]
    fn beam_outputs_are_distinct_sorted_and_in_library(
        kws in keywords(),
        query in keyword(),
        beam in 1usize..6,
        lambda in 0.0f64..=1.0,
    ) {
        let trie = Trie::build(V, kws.iter()).unwrap();
        let s = scorer_for(&kws, 1.0, 4);
        let r = beam_search(&query, &trie, &s, &BeamConfig::new(beam, 3, lambda)).unwrap();
        prop_assert!(r.outputs.len() <= beam);
        prop_assert!(r.outputs.windows(2).all(|w| w[0].original_score >= w[1].original_score));
        let distinct: BTreeSet<_> = r.keywords().into_iter().collect();
        prop_assert_eq!(distinct.len(), r.outputs.len());
        prop_assert!(distinct.iter().all(|k| trie.contains(k)));
    }

    #[test]
    fn merge_is_distinct_and_covers_inputs(
        lists in prop::collection::vec(prop::collection::vec(0u8..20, 0..8), 0..4),
        k in 0usize..30,
    ) {
        let merged = merge_ranked(&lists, k);
        prop_assert!(merged.len() <= k);
        let distinct: BTreeSet<_> = merged.iter().collect();
        prop_assert_eq!(distinct.len(), merged.len());
        let all: BTreeSet<_> = lists.iter().flatten().collect();
        if k >= all.len() {
            prop_assert_eq!(distinct, all);
        }
        if let Some(first) = lists.iter().find_map(|l| l.first()) {
            if k > 0 {
                prop_assert_eq!(&merged[0], first);
            }
        }
    }

    #[test]
    fn bm25_ignores_query_term_order(
        docs in prop::collection::vec(prop::collection::vec("[a-e]", 1..4), 1..8),
        query in prop::collection::vec("[a-e]", 1..4),
    ) {
        let docs: Vec<String> = docs.into_iter().map(|d| d.join(" ")).collect();
        let index = Bm25Index::build(&docs, Bm25Params::default()).unwrap();
        let q = query.join(" ");
        let mut rev = query.clone();
        rev.reverse();
        let rev = rev.join(" ");
        for d in 0..index.len() {
            prop_assert!((index.score(&q, d) - index.score(&rev, d)).abs() < 1e-9);
            prop_assert!(index.score(&q, d) >= 0.0);
        }
        let top = index.query(&q, index.len());
        let shorter = index.query(&q, 2);
        prop_assert_eq!(&top[..shorter.len()], &shorter[..]);
    }

    #[test]
    fn recall_is_monotone_in_k(
        results in prop::collection::vec(0u8..15, 0..12),
        golden in prop::collection::btree_set(0u8..15, 1..5),
    ) {
        let mut prev = 0.0;
        for k in 0..=results.len() + 1 {
            let r = recall_at_k(&results, &golden, k).unwrap();
            prop_assert!(r >= prev && r <= 1.0);
            prev = r;
        }
    }
}
