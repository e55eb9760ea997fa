//! `aggrlab` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 a verification
//! battery reported a failed assertion.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggrlab::generators::GeneratorSpec;
use aggrlab::hard::{ci_pair_build, distinguish_experiment, Distinguisher, DzFamily};
use aggrlab::harness::{run_curve, run_lemma_suite, write_curve_csv, ExperimentConfig, LearnerSpec};
use aggrlab::metrics::{expected_loss_exact, expected_loss_mc, LossReport};
use aggrlab::rng::substream;
use aggrlab::{Aggregator, DiscreteDist, InfoStructure, Model, SampleSet};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "aggrlab", version, about = "Forecast aggregation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Primary output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model from a named generator, e.g. `gen-model random_joint n=2 m=3`.
    GenModel {
        generator: String,
        /// `key=value` parameters; values are parsed as JSON when possible.
        params: Vec<String>,
    },
    /// Draw `T` i.i.d. records from a model file.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T")]
        t: usize,
    },
    /// Fit a learner to a sample CSV and write the aggregator as JSON.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        learner: String,
        /// Learner hyper-parameter as `key=value`; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
        /// Required by `bayes_optimal`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Expected loss and gap of an aggregator under a model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        aggregator: PathBuf,
        /// Estimate on this many fresh draws instead of enumerating.
        #[arg(long)]
        mc_budget: Option<usize>,
    },
    /// Run a sample-complexity curve from a JSON config.
    Curve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Hard-instance constructions.
    Hard {
        #[command(subcommand)]
        kind: HardKind,
    },
    /// Empirical error of a two-hypothesis distinguisher.
    Distinguish {
        /// Conditionally independent pair, e.g. `n=4,eps=1e-6`.
        #[arg(long, conflicts_with_all = ["d1", "d2"])]
        cipair: Option<String>,
        /// JSON array of probabilities.
        #[arg(long, requires = "d2")]
        d1: Option<PathBuf>,
        #[arg(long, requires = "d1")]
        d2: Option<PathBuf>,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value = "likelihood_ratio")]
        distinguisher: String,
    },
    /// Run a verification battery (`all` runs every one).
    Verify { battery: String },
}

#[derive(Subcommand)]
enum HardKind {
    /// A random member of the `D_z` family.
    Dz {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
        /// Emit the aggregation instance built from the drawn `D_z` as a model.
        #[arg(long)]
        instance: bool,
    },
    /// The two conditionally independent models and their distance.
    Cipair {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: f64,
    },
}

enum Outcome {
    Done,
    BatteryFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::BatteryFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("AGGRLAB_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.parse().ok().filter(|&n| n > 0).ok_or_else(|| anyhow!("AGGRLAB_THREADS={v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = cli.global;
    let out = g.out.as_deref();
    match cli.command {
        Command::GenModel { generator, params } => {
            json_only(g.format)?;
            let mut obj = parse_kv(params.iter().map(String::as_str))?;
            obj.insert("generator".into(), Value::String(generator));
            let spec: GeneratorSpec = serde_json::from_value(Value::Object(obj)).context("generator parameters")?;
            emit(out, spec.build(g.seed)?.to_json())?;
        }
        Command::Sample { model, t } => {
            let samples = load_model(&model)?.sample(t, g.seed)?;
            match g.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    samples.write_csv(&mut buf)?;
                    emit_bytes(out, &buf)?;
                }
                Format::Json => {
                    let records: Vec<Value> = samples
                        .records()
                        .iter()
                        .map(|r| json!({"omega": r.omega, "reports": r.profile.data()}))
                        .collect();
                    emit_json(out, &json!({"n": samples.n(), "k": samples.k(), "seed": g.seed, "records": records}))?;
                }
            }
        }
        Command::Train { samples, learner, params, model } => {
            json_only(g.format)?;
            let mut obj = parse_kv(params.iter().map(String::as_str))?;
            obj.insert("name".into(), Value::String(learner));
            let spec: LearnerSpec = serde_json::from_value(Value::Object(obj)).context("learner parameters")?;
            let file = fs::File::open(&samples).with_context(|| format!("reading {}", samples.display()))?;
            let set = SampleSet::read_csv(file, &samples.display().to_string())?;
            let oracle = model.map(|p| load_model(&p).and_then(|m| Ok(Aggregator::bayes_optimal(&m)?))).transpose()?;
            emit(out, spec.train(&set, oracle.as_ref())?.to_json())?;
        }
        Command::Eval { model, aggregator, mc_budget } => {
            let m = load_model(&model)?;
            let f = Aggregator::from_json(&read(&aggregator)?)?;
            let report = match mc_budget {
                Some(t) => expected_loss_mc(&m.sample(t, g.seed)?, &f)?,
                None => expected_loss_exact(&m, &f)?,
            };
            match g.format.unwrap_or(Format::Json) {
                Format::Json => emit_json(out, &serde_json::to_value(&report)?)?,
                Format::Csv => emit(out, loss_csv(&report))?,
            }
        }
        Command::Curve { config } => {
            let cfg = ExperimentConfig::from_json(&read(&config)?)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let model = cfg.load_model(base)?;
            let result = run_curve(&cfg, &model)?;
            let csv_path = out.map(Path::to_path_buf).or_else(|| cfg.output.csv.as_ref().map(|p| base.join(p)));
            match g.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_curve_csv(&result.rows, &mut buf)?;
                    emit_bytes(csv_path.as_deref(), &buf)?;
                }
                Format::Json => {
                    emit_json(csv_path.as_deref(), &json!({"summary": result.summary, "rows": result.rows}))?
                }
            }
            if let Some(p) = &cfg.output.summary {
                emit_json(Some(&base.join(p)), &serde_json::to_value(&result.summary)?)?;
            }
            if result.summary.failures > 0 {
                eprintln!("{} of {} cells failed", result.summary.failures, result.rows.len());
            }
        }
        Command::Hard { kind } => hard(kind, g.seed, g.format, out)?,
        Command::Distinguish { cipair, d1, d2, t, trials, distinguisher } => {
            let rule = Distinguisher::from_name(&distinguisher)?;
            let (a, b, source) = match (cipair, d1, d2) {
                (Some(spec), None, None) => {
                    let kv = parse_kv(spec.split(','))?;
                    let n = kv.get("n").and_then(Value::as_u64).ok_or_else(|| anyhow!("--cipair needs n=<int>"))?;
                    let eps =
                        kv.get("eps").and_then(Value::as_f64).ok_or_else(|| anyhow!("--cipair needs eps=<float>"))?;
                    if let Some(k) = kv.keys().find(|k| *k != "n" && *k != "eps") {
                        bail!("unknown --cipair key {k:?}");
                    }
                    let pair = ci_pair_build(n as usize, eps)?;
                    (pair.joint_dist(0)?, pair.joint_dist(1)?, json!({"cipair": {"n": n, "eps": eps}}))
                }
                (None, Some(p1), Some(p2)) => (
                    load_dist(&p1)?,
                    load_dist(&p2)?,
                    json!({"d1": p1.display().to_string(), "d2": p2.display().to_string()}),
                ),
                _ => bail!("give either --cipair or both --d1 and --d2"),
            };
            let (rows, summary) = distinguish_experiment(&a, &b, t, trials, &rule, g.seed)?;
            match g.format.unwrap_or(Format::Json) {
                Format::Json => {
                    let mut v = serde_json::to_value(&summary)?;
                    v["source"] = source;
                    v["seed"] = json!(g.seed);
                    emit_json(out, &v)?;
                }
                Format::Csv => {
                    let mut s = String::from("trial,truth,guess,T\n");
                    for r in &rows {
                        s.push_str(&format!("{},{},{},{}\n", r.trial, r.truth, r.guess, r.t));
                    }
                    emit(out, s)?;
                }
            }
        }
        Command::Verify { battery } => {
            json_only(g.format)?;
            let report = run_lemma_suite(&battery, g.seed)?;
            emit_json(out, &serde_json::to_value(&report)?)?;
            let failed = report.failures().count();
            if failed > 0 {
                eprintln!("{battery}: {failed} of {} assertions failed", report.assertions.len());
                return Ok(Outcome::BatteryFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn hard(kind: HardKind, seed: u64, format: Option<Format>, out: Option<&Path>) -> Result<()> {
    match kind {
        HardKind::Dz { m, n, eps, instance } => {
            let fam = DzFamily::new(m, n, eps)?;
            let z = fam.random_z(&mut substream(seed, "generate", 0));
            if instance {
                json_only(format)?;
                let model: Model = fam.to_aggregation_instance(&z)?.into();
                return emit(out, model.to_json());
            }
            let table = fam.table(&z)?;
            match format.unwrap_or(Format::Json) {
                Format::Json => {
                    let buckets: Vec<f64> = (0..fam.buckets()).map(|b| fam.bucket_hellinger_sq(b)).collect();
                    emit_json(
                        out,
                        &json!({
                            "schema_version": "1",
                            "m": m, "n": n, "eps": eps, "seed": seed,
                            "gamma": fam.gamma, "w": fam.w,
                            "z": z,
                            "tv_pair": fam.tv_pair(),
                            "bucket_hellinger_sq": buckets,
                            "table": table,
                        }),
                    )
                }
                Format::Csv => {
                    let mut s = (1..=n).map(|i| format!("s_{i},")).collect::<String>() + "prob\n";
                    for (lin, p) in table.iter().enumerate() {
                        let mut rest = lin;
                        let mut cells = vec![0; n];
                        for c in cells.iter_mut().rev() {
                            *c = rest % m;
                            rest /= m;
                        }
                        s.extend(cells.iter().map(|c| format!("{c},")));
                        s.push_str(&format!("{p}\n"));
                    }
                    emit(out, s)
                }
            }
        }
        HardKind::Cipair { n, eps } => {
            json_only(format)?;
            let pair = ci_pair_build(n, eps)?;
            let models: Vec<Value> = pair
                .models
                .iter()
                .map(|m| serde_json::to_value(Model::from(m.clone())))
                .collect::<serde_json::Result<_>>()?;
            emit_json(
                out,
                &json!({
                    "schema_version": "1",
                    "n": n, "eps": eps,
                    "p": pair.p,
                    "hellinger_sq_exact": pair.hellinger_sq_exact()?,
                    "hellinger_sq_chain_bound": pair.hellinger_sq_chain_bound()?,
                    "models": models,
                }),
            )
        }
    }
}

fn json_only(format: Option<Format>) -> Result<()> {
    if format == Some(Format::Csv) {
        bail!("this command only writes JSON");
    }
    Ok(())
}

/// `key=value` pairs into a JSON object; values that are not valid JSON
/// become strings.
fn parse_kv<'a>(items: impl Iterator<Item = &'a str>) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for item in items.filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {item:?}"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        if map.insert(k.trim().to_string(), value).is_some() {
            bail!("duplicate key {k:?}");
        }
    }
    Ok(map)
}

fn loss_csv(r: &LossReport) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    format!("loss,optimal_loss,gap,stderr\n{},{},{},{}\n", r.loss, opt(r.optimal_loss), opt(r.gap), opt(r.stderr))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_dist(path: &Path) -> Result<DiscreteDist> {
    let probs: Vec<f64> = serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(DiscreteDist::from_probs(probs)?)
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<()> {
    emit(out, serde_json::to_string_pretty(v)? + "\n")
}

fn emit(out: Option<&Path>, text: String) -> Result<()> {
    emit_bytes(out, text.as_bytes())
}

fn emit_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().lock().write_all(bytes)?),
    }
}
