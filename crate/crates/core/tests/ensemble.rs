use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdpscope_core::ensemble::{
    build_ensemble, ensemble_score, majority, rank_candidates, Candidate, CvScore, EnsembleError, EnsembleModel,
    TransportProfile,
};
use rdpscope_core::learners::{train, ModelSpec};
use rdpscope_core::{Activity, ActivitySet, FeatureMatrix};

fn data(seed: u64) -> (FeatureMatrix, Vec<ActivitySet>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..6).map(|i| format!("f{i}")).collect();
    let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = rows
        .iter()
        .map(|r| {
            let acts: Vec<Activity> = Activity::ALL.into_iter().filter(|a| r[a.index()] > 0.0).collect();
            ActivitySet::from_activities(&acts)
        })
        .collect();
    (FeatureMatrix::new(names, &rows).unwrap(), labels)
}

fn candidates(x: &FeatureMatrix, y: &[ActivitySet], class: Activity, n: usize) -> Vec<Candidate> {
    let labels: Vec<bool> = y.iter().map(|s| s.contains(class)).collect();
    let cols = [format!("f{}", class.index()), "f5".to_string()];
    let sub = x.select_columns(&cols).unwrap();
    let roster = [ModelSpec::knn(3), ModelSpec::decision_tree(), ModelSpec::random_forest(10, 1), ModelSpec::adaboost(10)];
    roster
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, spec)| Candidate {
            spec: *spec,
            cv: CvScore {
                precision: 90.0 - i as f64,
                recall: 80.0,
                f1: 85.0,
            },
            model: train(spec, &sub, &labels).unwrap(),
        })
        .collect()
}

fn ensemble(x: &FeatureMatrix, y: &[ActivitySet]) -> EnsembleModel {
    let per_class = Activity::ALL.iter().map(|&a| (a, candidates(x, y, a, 4))).collect();
    build_ensemble(TransportProfile::Tcp, per_class, vec![7]).unwrap()
}

#[test]
fn committees_take_top_three_by_precision() {
    let (x, y) = data(1);
    let e = ensemble(&x, &y);
    assert_eq!(e.committees.len(), 5);
    for c in &e.committees {
        let p: Vec<f64> = c.members.iter().map(|m| m.cv.precision).collect();
        assert_eq!(p, vec![90.0, 89.0, 88.0]);
    }
}

#[test]
fn prediction_is_member_majority() {
    let (x, y) = data(2);
    let e = ensemble(&x, &y);
    let predicted = e.predict_matrix(&x).unwrap();
    for (i, set) in predicted.iter().enumerate() {
        for c in &e.committees {
            let votes: Vec<bool> = c
                .members
                .iter()
                .map(|m| {
                    let row: Vec<f64> = m.model.schema.iter().map(|n| x.get(i, x.column_index(n).unwrap())).collect();
                    m.model.predict(&row)
                })
                .collect();
            let yes = votes.iter().filter(|v| **v).count();
            assert_eq!(set.contains(c.class), yes >= 2);
        }
    }
    let score = ensemble_score(&predicted, &y).unwrap();
    assert!(score > 50.0, "score {score}");
}

#[test]
fn prediction_resolves_columns_by_name() {
    let (x, y) = data(3);
    let e = ensemble(&x, &y);
    let mut names = x.names().to_vec();
    names.reverse();
    let row: Vec<f64> = x.row(0).iter().rev().copied().collect();
    assert_eq!(e.predict(&names, &row).unwrap(), e.predict(x.names(), x.row(0)).unwrap());
    let missing = x.select_columns(&["f0", "f1"]).unwrap();
    assert!(matches!(e.predict_matrix(&missing), Err(EnsembleError::SchemaMismatch(_))));
}

#[test]
fn json_round_trip_preserves_predictions() {
    let (x, y) = data(4);
    let e = ensemble(&x, &y);
    let back = EnsembleModel::from_json(&e.to_json()).unwrap();
    assert_eq!(back, e);
    assert_eq!(back.predict_matrix(&x).unwrap(), e.predict_matrix(&x).unwrap());
}

#[test]
fn transport_is_checked() {
    let (x, y) = data(5);
    let e = ensemble(&x, &y);
    assert!(e.expect_transport(TransportProfile::Tcp).is_ok());
    assert!(matches!(
        e.expect_transport(TransportProfile::Udp),
        Err(EnsembleError::TransportMismatch { .. })
    ));
}

#[test]
fn too_few_candidates_rejected() {
    let (x, y) = data(6);
    let per_class: Vec<_> = Activity::ALL
        .iter()
        .map(|&a| (a, candidates(&x, &y, a, if a == Activity::YouTube { 2 } else { 3 })))
        .collect();
    assert_eq!(
        build_ensemble(TransportProfile::Udp, per_class.clone(), vec![]).unwrap_err(),
        EnsembleError::InsufficientModels {
            class: Activity::YouTube,
            found: 2
        }
    );
    let partial = per_class.into_iter().filter(|(a, _)| *a != Activity::Download).collect();
    assert_eq!(
        build_ensemble(TransportProfile::Udp, partial, vec![]).unwrap_err(),
        EnsembleError::MissingClass(Activity::Download)
    );
}

#[test]
fn score_rejects_degenerate_inputs() {
    let one = [ActivitySet::EMPTY];
    assert_eq!(ensemble_score(&one, &one).unwrap_err(), EnsembleError::NoPositives);
    assert!(matches!(ensemble_score(&one, &[]), Err(EnsembleError::LengthMismatch { .. })));
}

fn set() -> impl Strategy<Value = ActivitySet> {
    any::<[bool; 5]>().prop_map(ActivitySet)
}

proptest! {
    #[test]
    fn score_bounded_by_hundred(rows in prop::collection::vec((set(), set()), 1..40)) {
        let (p, t): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        prop_assume!(t.iter().any(|s| !s.is_empty()));
        let s = ensemble_score(&p, &t).unwrap();
        prop_assert!(s <= 100.0 + 1e-9);
        prop_assert!((ensemble_score(&t, &t).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn each_false_positive_costs_two_hundred_over_positives(
        rows in prop::collection::vec((set(), set()), 1..40),
        pick in any::<prop::sample::Index>(),
        class in 0usize..5,
    ) {
        let (mut p, t): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let positives = t.iter().map(ActivitySet::count).sum::<usize>();
        prop_assume!(positives > 0);
        let i = pick.index(p.len());
        prop_assume!(!p[i].0[class] && !t[i].0[class]);
        let before = ensemble_score(&p, &t).unwrap();
        p[i].0[class] = true;
        let after = ensemble_score(&p, &t).unwrap();
        prop_assert!((before - after - 200.0 / positives as f64).abs() < 1e-9);
    }

    #[test]
    fn majority_is_monotone(votes in any::<[bool; 3]>(), flip in 0usize..3) {
        let mut more = votes;
        more[flip] = true;
        prop_assert!(!majority(votes) || majority(more));
        prop_assert_eq!(majority(votes), votes.iter().filter(|v| **v).count() >= 2);
    }

    #[test]
    fn ranking_is_a_sorted_permutation(raw in prop::collection::vec((0u8..4, 0u8..4, 0u8..4), 0..12)) {
        let scores: Vec<CvScore> = raw.iter().map(|&(p, r, f)| CvScore { precision: p as f64, recall: r as f64, f1: f as f64 }).collect();
        let order = rank_candidates(&scores);
        let mut seen = order.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..scores.len()).collect::<Vec<_>>());
        for w in order.windows(2) {
            let key = |i: usize| (raw[i].0, raw[i].1, raw[i].2);
            prop_assert!(key(w[0]) > key(w[1]) || (key(w[0]) == key(w[1]) && w[0] < w[1]));
        }
    }
}
