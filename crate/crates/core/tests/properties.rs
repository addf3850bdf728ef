mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn final_sets_are_disjoint_and_cover_their_inputs(profiles in corpus(40)) {
        check_disjoint_cover_conserve(&profiles)?;
    }

    #[test]
    fn merge_is_idempotent_and_order_free(profiles in corpus(40), seed in any::<u64>()) {
        check_idempotent_and_order_free(&profiles, seed)?;
    }

    #[test]
    fn clusters_match_graph_traversal(profiles in corpus(60)) {
        check_components(&profiles)?;
    }

    #[test]
    fn raising_the_threshold_refines_clusters(profiles in corpus(40), lo in 0.5f64..1.0, hi in 0.5f64..1.0) {
        check_threshold_monotone(&profiles, lo, hi)?;
    }

    #[test]
    fn exhaustive_blocking_finds_every_pair(profiles in corpus(40), threshold in 0.6f64..1.0) {
        check_blocking_recall(&profiles, threshold)?;
    }

    #[test]
    fn thread_count_does_not_change_output(profiles in corpus(40), threads in 2usize..6) {
        check_parallel_bytes(&profiles, threads)?;
    }

    #[test]
    fn extension_minus_fusion_counts_extended_sets(profiles in corpus(40)) {
        check_bookkeeping(&profiles)?;
    }
}

#[test]
fn blocking_recall_on_a_large_corpus() {
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig {
        cases: 4,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    runner
        .run(&corpus(500), |profiles| {
            check_blocking_recall(&profiles, 0.85)
        })
        .unwrap();
}

#[test]
fn default_blocking_recall_is_reported() {
    // default keys trade recall for speed; record how much on a fixed corpus
    use proptest::strategy::ValueTree;
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let profiles = corpus(300).new_tree(&mut runner).unwrap().current();
    let config = registry_dedup::SimilarityConfig::default();
    let blocked = edge_pairs(
        &registry_dedup::dedup::run_dedup(&profiles, &config)
            .unwrap()
            .edges,
    );
    let oracle = all_pairs(&profiles, &config);
    assert!(blocked.is_subset(&oracle));
    println!(
        "default blocking recall: {}/{}",
        blocked.len(),
        oracle.len()
    );
}
