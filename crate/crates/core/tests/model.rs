use aggrlab::generators::{random_cond_indep, random_joint, uninformative, xor};
use aggrlab::model::DEFAULT_CELL_CAP;
use aggrlab::rng::substream;
use aggrlab::{CondIndepModel, DiscreteJoint, Error, InfoStructure, Model};
use proptest::prelude::*;

fn point_eight_point_four() -> CondIndepModel {
    CondIndepModel::build(vec![0.5, 0.5], vec![vec![vec![0.4, 0.6], vec![0.8, 0.2]]; 2]).unwrap()
}

#[test]
fn product_cell_by_hand() {
    let joint = point_eight_point_four().to_joint().unwrap();
    assert!((joint.cell(&[0, 0], 1) - 0.32).abs() < 1e-15);
    assert!((joint.cell(&[0, 0], 0) - 0.08).abs() < 1e-15);
}

#[test]
fn report_by_bayes_rule() {
    let m = point_eight_point_four();
    assert!((m.expert_report(0, 0).unwrap()[1] - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.to_joint().unwrap().expert_report(1, 0).unwrap()[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn uninformative_reports_equal_prior() {
    let m = uninformative(3, 4, 0.3).unwrap();
    for s in 0..4 {
        assert!((m.expert_report(2, s).unwrap()[1] - 0.3).abs() < 1e-15);
    }
    let support = m.report_support().unwrap();
    assert_eq!(support.entries.len(), 1);
    assert!((support.entries[0].mass[1] - 0.3).abs() < 1e-12);
}

#[test]
fn degenerate_prior_reports_and_rho() {
    let m = CondIndepModel::build(vec![1.0, 0.0], vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
    assert_eq!(m.expert_report(0, 1).unwrap(), vec![1.0, 0.0]);
    assert!(matches!(m.rho(), Err(Error::DegeneratePrior(_))));
}

#[test]
fn single_expert_joint_is_prior_times_conditional() {
    let mut rng = substream(4, "test", 0);
    let m = random_cond_indep(1, 3, 2, (0.2, 0.8), &mut rng).unwrap();
    let j = m.to_joint().unwrap();
    for s in 0..3 {
        for w in 0..2 {
            assert!((j.cell(&[s], w) - m.prior()[w] * m.cond()[0][w][s]).abs() < 1e-15);
        }
    }
}

#[test]
fn support_cap() {
    let m = uninformative(30, 4, 0.5).unwrap();
    assert!(matches!(m.to_joint(), Err(Error::SupportTooLarge { cap: DEFAULT_CELL_CAP, .. })));
}

#[test]
fn xor_collapses_to_one_half() {
    let support = xor().unwrap().report_support().unwrap();
    assert_eq!(support.entries.len(), 1);
    assert_eq!(support.entries[0].profile.binary_reports(), vec![0.5, 0.5]);
    assert!((support.entries[0].mass[1] - 0.5).abs() < 1e-15);
}

#[test]
fn generic_two_by_two_support_size() {
    let mut rng = substream(9, "test", 0);
    for _ in 0..20 {
        let j = random_joint(2, 2, 2, &mut rng).unwrap();
        assert!(j.report_support().unwrap().triples().count() <= 8);
    }
}

#[test]
fn sampling() {
    let m = uninformative(2, 2, 0.3).unwrap();
    assert!(m.sample(0, 1).unwrap().is_empty());
    assert_eq!(m.sample(50, 1).unwrap(), m.sample(50, 1).unwrap());
    let s = m.sample(10_000, 2).unwrap();
    let freq = s.class_counts()[1] as f64 / 1e4;
    assert!((freq - 0.3).abs() < 0.02, "{freq}");
}

#[test]
fn joint_validation() {
    let eighth = vec![0.125; 8];
    let j = DiscreteJoint::build(2, vec![2, 2], 2, eighth).unwrap();
    assert!((j.p().unwrap() - 0.5).abs() < 1e-15);
    let mut neg = vec![0.125; 8];
    neg[0] = -0.1;
    neg[1] = 0.35;
    assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, neg), Err(Error::NotADistribution(_))));
    assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, vec![0.9 / 8.0; 8]), Err(Error::NotADistribution(_))));
    assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, vec![0.25; 4]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn model_file_round_trip() {
    let m: Model = point_eight_point_four().into();
    let text = m.to_json();
    assert!(text.contains("\"kind\": \"cond_indep\""));
    assert_eq!(Model::from_json(&text).unwrap(), m);
}

fn arb_model() -> impl Strategy<Value = Model> {
    (any::<u64>(), 1usize..=3, 2usize..=3, 2usize..=3, any::<bool>()).prop_map(|(seed, n, m, k, joint)| {
        let mut rng = substream(seed, "prop", 0);
        if joint {
            random_joint(n, m, k, &mut rng).unwrap().into()
        } else {
            random_cond_indep(n, m, k, (0.05, 0.95), &mut rng).unwrap().into()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn report_rows_are_distributions(model in arb_model()) {
        for i in 0..model.n() {
            for s in 0..model.signal_sizes()[i] {
                let row = model.expert_report(i, s).unwrap();
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn support_is_a_distribution_of_own_reports(model in arb_model()) {
        let support = model.report_support().unwrap();
        prop_assert!((support.total() - 1.0).abs() <= 1e-9);
        let tables = model.report_tables();
        for e in &support.entries {
            for (i, table) in tables.iter().enumerate() {
                let row = e.profile.row(i);
                let found = table.iter().flatten().any(|r| r.iter().zip(row).all(|(a, b)| (a - b).abs() <= 1e-12));
                prop_assert!(found);
            }
        }
    }

    #[test]
    fn cond_indep_reports_match_joint(seed in any::<u64>(), n in 1usize..=3, m in 2usize..=4, k in 2usize..=3) {
        let mut rng = substream(seed, "prop", 1);
        let model = random_cond_indep(n, m, k, (0.05, 0.95), &mut rng).unwrap();
        let joint = model.to_joint().unwrap();
        for i in 0..n {
            for s in 0..m {
                for (a, b) in model.expert_report(i, s).unwrap().iter().zip(joint.expert_report(i, s).unwrap()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn p_rho_round_trip(p in 0.001f64..0.999) {
        let m = uninformative(1, 1, p).unwrap();
        let rho = m.rho().unwrap();
        prop_assert!(rho > 0.0);
        prop_assert!((rho / (1.0 + rho) - p).abs() <= 1e-12);
    }

    #[test]
    fn p_mu_fact(model in arb_model()) {
        prop_assume!(model.k() == 2);
        let p = model.p().unwrap();
        let (mu0, mu1) = model.mu().unwrap();
        prop_assert!(((1.0 - p) * mu0 - p * mu1).abs() <= 1e-10);
    }

    #[test]
    fn expected_odds_equal_rho(seed in any::<u64>(), n in 1usize..=4, m in 2usize..=4) {
        let mut rng = substream(seed, "prop", 2);
        let model = random_cond_indep(n, m, 2, (0.1, 0.9), &mut rng).unwrap();
        let rho = model.rho().unwrap();
        for i in 0..n {
            let (e0, e1) = model.expected_odds(i).unwrap();
            prop_assert!((e0 - rho).abs() <= 1e-10);
            prop_assert!((e1 - 1.0 / rho).abs() <= 1e-10);
        }
    }

    #[test]
    fn outcomes_in_range(model in arb_model(), t in 0usize..200, seed in any::<u64>()) {
        let s = model.sample(t, seed).unwrap();
        prop_assert_eq!(s.len(), t);
        prop_assert!(s.records().iter().all(|r| r.omega < model.k()));
    }
}
