use std::path::Path;

use aggrlab::generators::{random_cond_indep, random_joint, GeneratorSpec};
use aggrlab::harness::{
    quantile, rho_coverage, run_curve, write_curve_csv, Evaluation, ExperimentConfig, LearnerSpec, ModelSource,
    OutputPaths, Schedule,
};
use aggrlab::rng::substream;
use aggrlab::Model;

fn config(model: &Model, learner: LearnerSpec, schedule: Vec<usize>, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSource::Inline(model.clone()),
        learner,
        schedule: Schedule::List(schedule),
        trials,
        seed,
        evaluation: Evaluation::Exact,
        output: OutputPaths::default(),
    }
}

fn medians(cfg: &ExperimentConfig, model: &Model) -> Vec<f64> {
    run_curve(cfg, model).unwrap().summary.per_t.iter().map(|s| s.median.unwrap()).collect()
}

fn ci_model(seed: u64, n: usize, m: usize) -> Model {
    let mut rng = substream(seed, "test", 0);
    random_cond_indep(n, m, 2, (0.2, 0.8), &mut rng).unwrap().into()
}

#[test]
fn oracle_gap_is_zero() {
    let model = ci_model(1, 3, 3);
    let r = run_curve(&config(&model, LearnerSpec::BayesOptimal, vec![10, 100], 5, 1), &model).unwrap();
    assert_eq!(r.rows.len(), 10);
    assert!(r.rows.iter().all(|row| row.gap.unwrap().abs() < 1e-12));
}

#[test]
fn empirical_erm_median_gap_decreases() {
    let mut rng = substream(2, "test", 0);
    let model: Model = random_joint(2, 2, 2, &mut rng).unwrap().into();
    let med = medians(&config(&model, LearnerSpec::ErmEmpirical, vec![100, 1000, 10_000], 30, 2), &model);
    assert!(med[0] > med[1] && med[1] > med[2], "{med:?}");
}

#[test]
fn theta_erm_beats_averaging() {
    let model = ci_model(3, 3, 3);
    let erm = medians(&config(&model, LearnerSpec::ErmTheta { grid: Default::default() }, vec![10_000], 10, 3), &model);
    let avg = medians(&config(&model, LearnerSpec::Averaging, vec![10_000], 1, 3), &model);
    assert!(erm[0] < avg[0], "{erm:?} vs {avg:?}");
}

#[test]
fn failing_cells_are_isolated() {
    let model = ci_model(4, 3, 2);
    let learner = LearnerSpec::StronglyInformative { gamma: 0.5, eps: 0.01, delta: 0.1 };
    let r = run_curve(&config(&model, learner, vec![5, 10], 4, 4), &model).unwrap();
    assert_eq!(r.rows.len(), 8);
    assert_eq!(r.summary.failures, 8);
    assert!(r.rows.iter().all(|row| row.gap.is_none() && row.error.is_some()));
    assert!(r.summary.per_t.iter().all(|s| s.completed == 0 && s.median.is_none()));
    let mut csv = Vec::new();
    write_curve_csv(&r.rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().nth(1), Some("5,0,,"));
}

#[test]
fn curves_are_deterministic_and_ordered() {
    let model = ci_model(5, 2, 3);
    let cfg = config(&model, LearnerSpec::ErmEmpirical, vec![20, 200], 6, 5);
    let (a, b) = (run_curve(&cfg, &model).unwrap(), run_curve(&cfg, &model).unwrap());
    assert_eq!(a, b);
    let grid: Vec<(usize, usize)> = a.rows.iter().map(|r| (r.t, r.trial)).collect();
    let want: Vec<(usize, usize)> = [20, 200].iter().flat_map(|&t| (0..6).map(move |i| (t, i))).collect();
    assert_eq!(grid, want);
}

#[test]
fn appending_schedule_points_keeps_earlier_cells() {
    let model = ci_model(6, 2, 2);
    let short = run_curve(&config(&model, LearnerSpec::ErmEmpirical, vec![50], 3, 6), &model).unwrap();
    let long = run_curve(&config(&model, LearnerSpec::ErmEmpirical, vec![50, 500], 3, 6), &model).unwrap();
    assert_eq!(short.rows[..], long.rows[..3]);
}

#[test]
fn monotone_on_most_models() {
    let monotone = (0..20)
        .filter(|&s| {
            let model = ci_model(100 + s, 2, 2);
            let med = medians(&config(&model, LearnerSpec::ErmEmpirical, vec![100, 1000, 10_000], 20, s), &model);
            med.windows(2).all(|w| w[1] <= w[0])
        })
        .count();
    assert!(monotone >= 19, "{monotone}/20");
}

#[test]
fn monte_carlo_tracks_exact() {
    let model = ci_model(7, 3, 2);
    let mut cfg = config(&model, LearnerSpec::Averaging, vec![10], 1, 7);
    let exact = run_curve(&cfg, &model).unwrap().rows[0].gap.unwrap();
    cfg.evaluation = Evaluation::MonteCarlo { budget: 200_000 };
    let mc = run_curve(&cfg, &model).unwrap().rows[0].gap.unwrap();
    assert!((mc - exact).abs() < 0.1 * exact + 1e-3, "{mc} vs {exact}");
}

#[test]
fn config_parsing() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "model": {"generator": {"generator": "random_cond_indep", "n": 3, "m": 3, "seed": 4}},
            "learner": {"name": "strongly_informative", "gamma": 0.5, "eps": 0.01, "delta": 0.1},
            "schedule": {"start": 10, "stop": 1000, "points": 3},
            "trials": 2,
            "seed": 1,
            "evaluation": {"mode": "monte_carlo", "budget": 1000},
            "output": {"csv": "out.csv"}
        }"#,
    )
    .unwrap();
    assert_eq!(cfg.schedule.values().unwrap(), vec![10, 100, 1000]);
    assert_eq!(cfg.learner.name(), "strong_informative");
    assert_eq!(cfg.output.csv.as_deref(), Some("out.csv"));
    let from_cfg = cfg.load_model(Path::new(".")).unwrap();
    assert_eq!(from_cfg, GeneratorSpec::RandomCondIndep { n: 3, m: 3, k: 2, p_range: (0.1, 0.9) }.build(4).unwrap());

    let bad = [
        r#"{"model": {"file": "x.json"}, "learner": {"name": "averaging"}, "schedule": [10, 10], "trials": 1, "seed": 0}"#,
        r#"{"model": {"file": "x.json"}, "learner": {"name": "averaging"}, "schedule": [10], "trials": 0, "seed": 0}"#,
        r#"{"model": {"file": "x.json"}, "learner": {"name": "nope"}, "schedule": [10], "trials": 1, "seed": 0}"#,
    ];
    for text in bad {
        assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
    }
}

#[test]
fn quantile_interpolates() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(quantile(&v, 0.5), 2.5);
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert!((quantile(&v, 0.1) - 1.3).abs() < 1e-12);
}

#[test]
fn rho_estimate_covers() {
    let model = ci_model(8, 5, 2);
    let cov = rho_coverage(&model, 0.2, 0.05, 100, 8).unwrap();
    assert!(cov.rate() >= 0.8, "{cov:?}");
}
