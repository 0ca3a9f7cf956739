use std::collections::BTreeSet;

use privlink::corpus::{generate_pairs, person_features, person_schema, ErrorProfile};
use privlink::linkage::{
    agreement_weight, evaluate, fit_em, link, mixture_log_likelihood, ComparisonVector, EmOptions,
    LinkConfig, LinkageModel,
};
use proptest::prelude::*;

fn distribution(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn arb_model() -> impl Strategy<Value = LinkageModel> {
    prop::collection::vec(2usize..5, 1..6).prop_flat_map(|arities| {
        let dists = |arities: &[usize]| {
            arities
                .iter()
                .map(|&a| prop::collection::vec(0.05f64..1.0, a).prop_map(distribution))
                .collect::<Vec<_>>()
        };
        (dists(&arities), dists(&arities), 0.01f64..0.99).prop_map(|(m, u, p)| LinkageModel {
            m,
            u,
            p,
        })
    })
}

fn arb_gamma(arities: Vec<usize>) -> impl Strategy<Value = ComparisonVector> {
    let levels: Vec<_> = arities.iter().map(|&a| 0..a).collect();
    let missing = prop::collection::vec(prop::bool::weighted(0.2), arities.len());
    (levels, missing).prop_map(|(levels, missing)| ComparisonVector { levels, missing })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weight_is_additive_over_features(
        (model, gamma) in arb_model().prop_flat_map(|m| {
            let arities = m.arities();
            (Just(m), arb_gamma(arities))
        })
    ) {
        let total = agreement_weight(&gamma, &model).unwrap();
        let mut sum = 0.0;
        for f in 0..gamma.len() {
            let mut single = gamma.clone();
            single.missing = (0..gamma.len()).map(|g| g != f || gamma.missing[f]).collect();
            sum += agreement_weight(&single, &model).unwrap();
        }
        prop_assert!((total - sum).abs() <= 1e-9 * (1.0 + total.abs()));
    }

    #[test]
    fn em_log_likelihood_never_decreases(
        (model, gammas) in arb_model().prop_flat_map(|m| {
            let arities = m.arities();
            (Just(m), prop::collection::vec(arb_gamma(arities), 1..200))
        })
    ) {
        let init = LinkageModel::symmetric_init(model.arities(), 0.8, 0.2, 0.3);
        let fit = fit_em(&gammas, &init, &EmOptions { max_iter: 60, ..EmOptions::default() }).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        let last = *fit.log_likelihoods.last().unwrap();
        prop_assert!((mixture_log_likelihood(&gammas, &fit.model) - last).abs() <= 1e-6 * (1.0 + last.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn classification_partitions_candidates_and_blocking_is_conservative(
        n in 2usize..40,
        overlap in 0.0f64..=1.0,
        rate in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let pair = generate_pairs(n, overlap, &ErrorProfile::typos(rate), seed).unwrap();
        let schema = person_schema();
        let plain = LinkConfig::new(person_features());
        let blocked = LinkConfig { block_field: Some("birth_year".into()), ..plain.clone() };
        let full = link(&pair.file_a, &pair.file_b, &schema, &plain).unwrap();
        let part = link(&pair.file_a, &pair.file_b, &schema, &blocked).unwrap();

        for r in [&full, &part] {
            prop_assert_eq!(r.links.len() + r.possibles.len() + r.nonlinks.len(), r.candidate_count);
        }
        prop_assert_eq!(full.candidate_count, n * n);
        prop_assert!(part.candidate_count <= full.candidate_count);
        prop_assert_eq!(part.candidate_count + part.blocked_out_count, n * n);

        let candidates: BTreeSet<(String, String)> = part
            .classified()
            .map(|(p, _)| (p.id_a.clone(), p.id_b.clone()))
            .collect();
        for l in &part.links {
            prop_assert!(candidates.contains(&(l.id_a.clone(), l.id_b.clone())));
        }

        // Same model on both sides so recall differs only through blocking.
        let fixed = LinkConfig { model: Some(full.model.clone()), ..plain };
        let fixed_blocked = LinkConfig { block_field: Some("birth_year".into()), ..fixed.clone() };
        let rf = evaluate(&link(&pair.file_a, &pair.file_b, &schema, &fixed).unwrap(), &pair.truth.pairs);
        let rb = evaluate(&link(&pair.file_a, &pair.file_b, &schema, &fixed_blocked).unwrap(), &pair.truth.pairs);
        prop_assert!(rb.recall <= rf.recall + 1e-12);
    }
}
