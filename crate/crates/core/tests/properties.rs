mod support;

use insightlens_core::attribution::exact_shapley;
use insightlens_core::features::{build_matrix, FeatureKind, Target};
use insightlens_core::learn::{train_forest, Classifier, Dataset, ForestParams};
use insightlens_core::patterns::{mine_trails, normalize_trail, MinerConfig};
use insightlens_core::simulator::{generate_cohort, ProfileSet};
use insightlens_core::stats::{bootstrap_ci, kendall_tau_b};
use insightlens_core::{seed, ActionType, ParticipantId};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn percentile_bootstrap_of_mean_covers_near_nominal_rate() {
    let truth = 3.0;
    let normal = Normal::new(truth, 2.0).unwrap();
    let runs = 500;
    let covered = (0..runs)
        .filter(|&r| {
            let mut rng = seed::rng(7, "coverage-sample", r);
            let data: Vec<f64> = (0..100).map(|_| normal.sample(&mut rng)).collect();
            let (lo, hi) =
                bootstrap_ci(&data, |s| s.iter().sum::<f64>() / s.len() as f64, 2000, 0.95, seed::derive(7, "coverage", r));
            lo <= truth && truth <= hi
        })
        .count();
    let rate = covered as f64 / runs as f64;
    assert!((rate - 0.95).abs() <= 0.03, "coverage {rate}");
}

#[test]
fn unused_feature_gets_zero_attribution() {
    let cohort = generate_cohort(&ProfileSet::builtin(), 40, 11).unwrap();
    let matrix = build_matrix(&cohort.notes, &cohort.logs, FeatureKind::References, Some(Target::Category), None).unwrap();
    let mut data = Dataset::from_matrix(&matrix, Target::Category).unwrap();
    data.registry.names.push("constant".into());
    for row in &mut data.x {
        row.push(1.0);
    }
    let forest = train_forest(&data, &ForestParams { n_trees: 30, ..ForestParams::default() }, 11, 0).unwrap();
    let bg: Vec<Vec<f64>> = data.x.iter().step_by(7).cloned().collect();
    for i in (0..data.len()).step_by(23) {
        let x = &data.x[i];
        let att = exact_shapley(&forest, forest.predict(x), data.note_ids[i].clone(), x, &bg).unwrap();
        assert_eq!(att.phi[8], 0.0);
    }
}

#[test]
fn kendall_is_symmetric_and_sign_flips_under_reversal() {
    let mut rng = seed::rng(3, "kendall-sym", 0);
    for _ in 0..100 {
        let n = rng.random_range(3..30);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let (Ok(a), Ok(b)) = (kendall_tau_b(&x, &y), kendall_tau_b(&y, &x)) else { continue };
        assert!((a.tau_b - b.tau_b).abs() < 1e-12);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let c = kendall_tau_b(&x, &neg).unwrap();
        assert!((a.tau_b + c.tau_b).abs() < 1e-12);
        assert!((a.p_value - c.p_value).abs() < 1e-12);
    }
}

fn trails_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..4, 1..30), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn miner_agrees_with_oracle_on_four_letter_alphabets(raw in trails_strategy(), t1 in 0usize..=5, t2 in 0usize..=5) {
        let (t1, t2) = (t1.max(t2) * 10, t1.min(t2) * 10);
        let alphabet: Vec<ActionType> = ActionType::all().take(4).collect();
        let trails: Vec<_> = raw
            .iter()
            .enumerate()
            .map(|(p, t)| {
                let actions: Vec<ActionType> = t.iter().map(|&i| alphabet[i]).collect();
                normalize_trail(ParticipantId::new(format!("p{p}")), &actions)
            })
            .collect();
        let config = MinerConfig { t1_fraction: t1 as f64 / 100.0, t2_fraction: t2 as f64 / 100.0, min_len: 2, max_len: 10 };
        let got = mine_trails(&trails, &config);
        let strings: Vec<Vec<String>> =
            raw.iter().map(|t| t.iter().map(|&i| alphabet[i].token().to_string()).collect()).collect();
        let want = support::mine_oracle(&strings, t1, t2);
        let got_finals: Vec<(Vec<String>, usize, usize)> = got
            .final_patterns
            .iter()
            .map(|f| (f.sequence.iter().map(|a| a.token().to_string()).collect(), f.support, f.count))
            .collect();
        let want_finals: Vec<(Vec<String>, usize, usize)> =
            want.finals.iter().map(|f| (f.sequence.clone(), f.support, f.count)).collect();
        prop_assert_eq!(got_finals, want_finals);
        prop_assert_eq!(got.sequence_candidates.len(), want.candidates.len());
    }
}
