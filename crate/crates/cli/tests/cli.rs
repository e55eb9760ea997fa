use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aggrlab"));
    c.env_remove("AGGRLAB_THREADS");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aggrlab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.json")
}

#[test]
fn verify_exits_zero() {
    let dir = scratch("verify");
    let out = run(&["verify", "difference_loss", "--seed", "7"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["assertions"].as_array().unwrap().len(), 100);
}

#[test]
fn validation_and_usage_errors_exit_one() {
    let dir = scratch("errors");
    for args in [
        vec!["verify", "no_such_battery"],
        vec!["frobnicate"],
        vec!["hard", "dz", "--m", "3", "--n", "2", "--eps", "0.01"],
        vec!["distinguish", "--T", "10", "--trials", "5"],
        vec!["gen-model", "random_joint", "n"],
        vec!["verify", "p_mu", "--format", "csv"],
    ] {
        let out = run(&args, &dir);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn curve_on_demo_config_writes_csv() {
    let dir = scratch("curve");
    fs::copy(demo_config(), dir.join("demo.json")).unwrap();
    let out = run(&["curve", "--config", "demo.json", "--out", "curve.csv"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("T,trial,gap,loss"));
    assert_eq!(lines.count(), 30);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("demo_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], "1");
    assert_eq!(summary["per_t"].as_array().unwrap().len(), 3);
}

#[test]
fn distinguish_reports_both_floors() {
    let dir = scratch("distinguish");
    let args = ["distinguish", "--cipair", "n=4,eps=1e-6", "--T", "1000", "--trials", "2000", "--seed", "1"];
    let a = run(&args, &dir);
    assert!(a.status.success());
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["floor_sqrtT"].is_f64() && v["floor_exp"].is_f64());
    assert_eq!(a.stdout, run(&args, &dir).stdout);
}

#[test]
fn model_sample_train_eval_pipeline() {
    let dir = scratch("pipeline");
    let ok = |args: &[&str]| {
        let out = run(args, &dir);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["gen-model", "random_cond_indep", "n=3", "m=3", "--seed", "4", "--out", "model.json"]);
    ok(&["sample", "--model", "model.json", "--T", "5000", "--seed", "5", "--out", "s.csv"]);
    ok(&["train", "--samples", "s.csv", "--learner", "erm_theta", "--out", "f.json"]);
    ok(&["train", "--samples", "s.csv", "--learner", "bayes_optimal", "--model", "model.json", "--out", "opt.json"]);
    let eval = |agg: &str| -> serde_json::Value {
        let out = run(&["eval", "--model", "model.json", "--aggregator", agg], &dir);
        assert!(out.status.success());
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let gap = eval("f.json")["gap"].as_f64().unwrap();
    assert!((0.0..0.01).contains(&gap), "{gap}");
    assert!(eval("opt.json")["gap"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = scratch("threads");
    fs::copy(demo_config(), dir.join("demo.json")).unwrap();
    let args = ["curve", "--config", "demo.json", "--format", "json"];
    let one = bin().args(args).env("AGGRLAB_THREADS", "1").current_dir(&dir).output().unwrap();
    let many = bin().args(args).env("AGGRLAB_THREADS", "4").current_dir(&dir).output().unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
}
