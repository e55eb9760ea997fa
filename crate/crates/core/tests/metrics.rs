use aggrlab::aggregators::{Aggregator, FnForecast};
use aggrlab::generators::{random_joint, random_simplex, xor};
use aggrlab::metrics::{
    expected_loss_exact, expected_loss_mc, hellinger_sq, hellinger_sq_iid_product, record_loss, tv_distance, Method,
};
use aggrlab::model::Record;
use aggrlab::rng::substream;
use aggrlab::{DiscreteDist, Error, InfoStructure, ReportProfile, SampleSet};
use proptest::prelude::*;

#[test]
fn optimum_has_zero_gap() {
    let mut rng = substream(1, "test", 0);
    let j = random_joint(2, 3, 2, &mut rng).unwrap();
    let r = expected_loss_exact(&j, &Aggregator::bayes_optimal(&j).unwrap()).unwrap();
    assert_eq!(r.gap.unwrap(), 0.0);
    assert_eq!(r.method, Method::Exact);
}

#[test]
fn xor_loss_is_a_quarter() {
    let j = xor().unwrap();
    let half = FnForecast(2, |_: &ReportProfile| Ok(vec![0.5, 0.5]));
    let r = expected_loss_exact(&j, &half).unwrap();
    assert!((r.loss - 0.25).abs() < 1e-15);
    assert!((r.optimal_loss.unwrap() - 0.25).abs() < 1e-15);
    for c in [0.0, 0.3, 0.7, 1.0] {
        let f = FnForecast(2, move |_: &ReportProfile| Ok(vec![1.0 - c, c]));
        assert!(expected_loss_exact(&j, &f).unwrap().loss >= 0.25);
    }
}

/// Brute force over every `(s, w)` cell, independent of the support merge.
#[test]
fn constant_forecast_matches_brute_force() {
    let mut rng = substream(2, "test", 0);
    for _ in 0..10 {
        let j = random_joint(2, 3, 2, &mut rng).unwrap();
        let p = j.p().unwrap();
        let f = FnForecast(2, move |_: &ReportProfile| Ok(vec![1.0 - p, p]));
        let mut brute = 0.0;
        for chunk in j.prob().chunks(2) {
            brute += chunk[0] * p * p + chunk[1] * (1.0 - p) * (1.0 - p);
        }
        assert!((expected_loss_exact(&j, &f).unwrap().loss - brute).abs() < 1e-12);
        assert!((brute - p * (1.0 - p)).abs() < 1e-12);
    }
}

#[test]
fn mc_edge_cases() {
    let prof = ReportProfile::from_binary(&[0.3, 0.6]).unwrap();
    let same = SampleSet::new(2, 2, vec![Record { profile: prof.clone(), omega: 1 }; 5], None, "x".into()).unwrap();
    let avg = Aggregator::averaging(2);
    let r = expected_loss_mc(&same, &avg).unwrap();
    assert_eq!(r.stderr, Some(0.0));
    assert!((r.loss - 0.55 * 0.55).abs() < 1e-15);
    let one = same.slice(0, 1);
    assert!((expected_loss_mc(&one, &avg).unwrap().loss - record_loss(&[0.55, 0.45], 1)).abs() < 1e-15);
    assert!(matches!(expected_loss_mc(&same.slice(0, 0), &avg), Err(Error::EmptySample)));
}

/// CLT calibration: the exact loss falls within 3 standard errors of the
/// Monte-Carlo estimate in at least 99 of 100 seeded runs.
#[test]
fn mc_loss_calibrated_against_exact() {
    let mut rng = substream(3, "test", 0);
    let j = random_joint(2, 2, 2, &mut rng).unwrap();
    let f = Aggregator::bordley(1.3, 2).unwrap();
    let exact = expected_loss_exact(&j, &f).unwrap().loss;
    let hits = (0..100)
        .filter(|&seed| {
            let r = expected_loss_mc(&j.sample(100_000, seed).unwrap(), &f).unwrap();
            (r.loss - exact).abs() <= 3.0 * r.stderr.unwrap()
        })
        .count();
    assert!(hits >= 99, "{hits}");
}

#[test]
fn distance_examples() {
    let a = DiscreteDist::from_probs(vec![0.6, 0.4]).unwrap();
    let b = DiscreteDist::from_probs(vec![0.5, 0.5]).unwrap();
    assert!((tv_distance(&a, &b).unwrap() - 0.1).abs() < 1e-15);
    assert!((hellinger_sq_iid_product(0.1, 3) - 0.271).abs() < 1e-15);
    assert_eq!(hellinger_sq_iid_product(0.3, 1), 0.3);
}

fn arb_pair() -> impl Strategy<Value = (DiscreteDist, DiscreteDist)> {
    (any::<u64>(), 2usize..10).prop_map(|(seed, len)| {
        let mut rng = substream(seed, "prop", 0);
        (
            DiscreteDist::from_probs(random_simplex(len, &mut rng)).unwrap(),
            DiscreteDist::from_probs(random_simplex(len, &mut rng)).unwrap(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tv_at_most_sqrt2_hellinger((a, b) in arb_pair()) {
        let tv = tv_distance(&a, &b).unwrap();
        let h = hellinger_sq(&a, &b).unwrap().sqrt();
        prop_assert!(tv <= std::f64::consts::SQRT_2 * h + 1e-12);
        prop_assert!((0.0..=1.0).contains(&tv));
    }

    #[test]
    fn tv_bounds_bounded_test_functions((a, b) in arb_pair(), seed in any::<u64>()) {
        let mut rng = substream(seed, "prop", 1);
        let h = random_simplex(a.len(), &mut rng);
        let ea: f64 = a.probs().iter().zip(&h).map(|(p, x)| p * x).sum();
        let eb: f64 = b.probs().iter().zip(&h).map(|(p, x)| p * x).sum();
        prop_assert!((ea - eb).abs() <= tv_distance(&a, &b).unwrap() + 1e-12);
    }

    #[test]
    fn iid_product_below_union_bound(h2 in 0.0f64..=1.0, t in 0u64..1000) {
        let v = hellinger_sq_iid_product(h2, t);
        prop_assert!(v <= t as f64 * h2 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn multi_outcome_loss_bound(seed in any::<u64>(), k in 2usize..6, w in 0usize..6) {
        let mut rng = substream(seed, "prop", 2);
        let f = random_simplex(k, &mut rng);
        let l = record_loss(&f, w % k);
        prop_assert!(l >= 0.0 && l <= 2.0 / k as f64 + 1e-15);
    }

    #[test]
    fn gap_identity_on_random_joints(seed in any::<u64>(), n in 1usize..=3, m in 2usize..=3, theta in 0.05f64..20.0) {
        let mut rng = substream(seed, "prop", 3);
        let j = random_joint(n, m, 2, &mut rng).unwrap();
        let r = expected_loss_exact(&j, &Aggregator::bordley(theta, n).unwrap()).unwrap();
        prop_assert!((r.gap.unwrap() - r.gap_direct.unwrap()).abs() <= 1e-9);
        prop_assert!(r.gap.unwrap() >= -1e-12);
    }
}
