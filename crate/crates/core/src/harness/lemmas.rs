//! Registered property batteries.
//!
//! Each battery draws its random instances from substreams of the given seed
//! and records one [`Assertion`] per checked instance: the measured value,
//! the tolerance it is compared against and the verdict.

use std::f64::consts::SQRT_2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::aggregators::{bordley_value, Aggregator, FnForecast, Forecast};
use crate::error::{Error, Result};
use crate::generators::{random_cond_indep, random_joint, random_simplex};
use crate::hard::{aggregator_to_distribution, ci_pair_build, dz_base, DzFamily, DZ_B, DZ_C};
use crate::metrics::{expected_loss_exact, half_l1, hellinger_sq, hellinger_sq_iid_product, tv_distance, DiscreteDist};
use crate::model::{CondIndepModel, DiscreteJoint, InfoStructure, Model, ReportProfile};
use crate::rng::{self, splitmix64, Rng};

pub const BATTERIES: &[&str] = &[
    "difference_loss",
    "p_mu",
    "expectation_product_rho",
    "bordley_bruteforce",
    "multi_bordley_bruteforce",
    "dz_properties",
    "reduction_roundtrip",
    "distances",
    "report_consistency",
    "cipair",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub schema_version: String,
    pub battery: String,
    pub seed: u64,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
}

impl BatteryReport {
    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

#[derive(Default)]
struct Recorder(Vec<Assertion>);

impl Recorder {
    /// Passes when `measured <= tolerance`.
    fn at_most(&mut self, name: impl Into<String>, measured: f64, tolerance: f64) {
        let passed = measured <= tolerance;
        self.0.push(Assertion { name: name.into(), measured, tolerance, passed });
    }

    /// Passes when `measured > 0`; the tolerance field records the 0 bar.
    fn positive(&mut self, name: impl Into<String>, measured: f64) {
        self.0.push(Assertion { name: name.into(), measured, tolerance: 0.0, passed: measured > 0.0 });
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.0.push(Assertion { name: name.into(), measured: ok as u8 as f64, tolerance: 1.0, passed: ok });
    }
}

/// Runs the battery called `selector` (or `"all"`).
pub fn run_lemma_suite(selector: &str, seed: u64) -> Result<BatteryReport> {
    let mut rec = Recorder::default();
    if selector == "all" {
        for name in BATTERIES {
            let sub = run_lemma_suite(name, seed)?;
            rec.0.extend(sub.assertions.into_iter().map(|a| Assertion { name: format!("{name}/{}", a.name), ..a }));
        }
    } else {
        let run: fn(&mut Recorder, u64) -> Result<()> = match selector {
            "difference_loss" => difference_loss,
            "p_mu" => p_mu,
            "expectation_product_rho" => expectation_product_rho,
            "bordley_bruteforce" => bordley_bruteforce,
            "multi_bordley_bruteforce" => multi_bordley_bruteforce,
            "dz_properties" => dz_properties,
            "reduction_roundtrip" => reduction_roundtrip,
            "distances" => distances,
            "report_consistency" => report_consistency,
            "cipair" => cipair,
            other => return Err(Error::UnknownBattery(other.to_string())),
        };
        run(&mut rec, seed)?;
    }
    Ok(BatteryReport {
        schema_version: "1".into(),
        battery: selector.into(),
        seed,
        passed: rec.0.iter().all(|a| a.passed),
        assertions: rec.0,
    })
}

fn stream(seed: u64, battery: &str) -> Rng {
    rng::substream(seed, battery, 0)
}

/// Deterministic pseudo-random value in `[0, 1)` attached to a profile.
fn profile_noise(salt: u64, r: &ReportProfile) -> f64 {
    let h = r.key().0.iter().fold(salt, |h, &x| splitmix64(h ^ x as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn random_binary_model(rng: &mut Rng, n_max: usize, m_max: usize) -> Result<Model> {
    let n = rng.random_range(1..=n_max);
    let m = rng.random_range(2..=m_max);
    Ok(if rng.random::<bool>() {
        random_joint(n, m, 2, rng)?.into()
    } else {
        random_cond_indep(n, m, 2, (0.05, 0.95), rng)?.into()
    })
}

fn difference_loss(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "difference_loss");
    for j in 0..100 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let joint = random_joint(n, m, 2, &mut rng)?;
        let star = Aggregator::bayes_optimal(&joint)?;
        let theta = 10f64.powf(rng.random_range(-1.0..1.0));
        let c = rng.random::<f64>();
        let salt = rng.random::<u64>();
        let shift = rng.random_range(-0.3..0.3);
        let bord = Aggregator::bordley(theta, n)?;
        let avg = Aggregator::averaging(2);
        let constant = FnForecast(2, move |_: &ReportProfile| Ok(vec![1.0 - c, c]));
        let table = FnForecast(2, move |r: &ReportProfile| {
            let v = profile_noise(salt, r);
            Ok(vec![1.0 - v, v])
        });
        let nudged = FnForecast(2, |r: &ReportProfile| {
            let v = (star.apply(r)?[1] + shift).clamp(0.0, 1.0);
            Ok(vec![1.0 - v, v])
        });
        let fs: [&dyn Forecast; 5] = [&bord, &avg, &constant, &table, &nudged];
        let mut worst: f64 = 0.0;
        for f in fs {
            let d = match expected_loss_exact(&joint, f) {
                Ok(r) => (r.gap.unwrap() - r.gap_direct.unwrap()).abs(),
                Err(Error::GapIdentity { gap, direct }) => (gap - direct).abs(),
                Err(e) => return Err(e),
            };
            worst = worst.max(d);
        }
        rec.at_most(format!("joint_{j}"), worst, 1e-9);
    }
    Ok(())
}

fn p_mu(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "p_mu");
    for j in 0..100 {
        let model = random_binary_model(&mut rng, 3, 3)?;
        let p = model.p()?;
        let (mu0, mu1) = model.mu()?;
        rec.at_most(format!("model_{j}"), ((1.0 - p) * mu0 - p * mu1).abs(), 1e-10);
    }
    Ok(())
}

fn expectation_product_rho(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "expectation_product_rho");
    for j in 0..100 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(2..=4);
        let model = random_cond_indep(n, m, 2, (0.1, 0.9), &mut rng)?;
        let rho = model.rho()?;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let (e0, e1) = model.expected_odds(i)?;
            worst = worst.max((e0 - rho).abs()).max((e1 - 1.0 / rho).abs());
        }
        rec.at_most(format!("model_{j}"), worst, 1e-10);
    }
    Ok(())
}

fn bordley_bruteforce(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "bordley_bruteforce");
    for j in 0..50 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(2..=4);
        let model = random_cond_indep(n, m, 2, (0.1, 0.9), &mut rng)?;
        let rho = model.rho()?;
        let mut worst: f64 = 0.0;
        for e in model.to_joint()?.report_support()?.entries {
            let v = bordley_value(rho, &e.profile.binary_reports())?;
            worst = worst.max((v - e.posterior()[1]).abs());
        }
        rec.at_most(format!("model_{j}"), worst, 1e-10);
    }
    Ok(())
}

fn multi_bordley_bruteforce(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "multi_bordley_bruteforce");
    for j in 0..20 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let model = random_cond_indep(n, m, 3, (0.1, 0.9), &mut rng)?;
        let e = (n - 1) as f64;
        let f = Aggregator::multi_bordley(model.prior().iter().map(|q| q.powf(-e)).collect())?;
        let mut worst: f64 = 0.0;
        for entry in model.to_joint()?.report_support()?.entries {
            let out = f.apply(&entry.profile)?;
            for (a, b) in out.iter().zip(entry.posterior()) {
                worst = worst.max((a - b).abs());
            }
        }
        rec.at_most(format!("model_{j}"), worst, 1e-10);
    }
    Ok(())
}

fn dz_properties(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "dz_properties");
    let eps = 0.02;
    for (m, n) in [(2, 2), (2, 3), (4, 2)] {
        let tag = format!("m{m}_n{n}");
        let fam = DzFamily::new(m, n, eps)?;
        let size = fam.size() as f64;
        let base = dz_base(m, n)?;
        let base_marg = fam.coordinate_marginals(base.probs());
        rec.at_most(format!("{tag}/w_bounds"), (size - fam.w).max(fam.w - std::f64::consts::E * size), 0.0);
        let strict = base_marg.iter().flat_map(|v| v.windows(2).map(|w| w[1] - w[0])).fold(f64::INFINITY, f64::min);
        rec.positive(format!("{tag}/distinct_marginals"), strict);
        for b in 0..fam.buckets() {
            rec.at_most(format!("{tag}/bucket_{b}_hellinger"), fam.bucket_hellinger_sq(b), 8.0 * (DZ_C * eps).powi(2));
        }
        for trial in 0..10 {
            let z = fam.random_z(&mut rng);
            let d = fam.table(&z)?;
            let max = d.iter().cloned().fold(0.0, f64::max);
            rec.at_most(format!("{tag}/z{trial}/max_entry"), max * size, DZ_B);
            let marg = fam.coordinate_marginals(&d);
            let drift =
                marg.iter().flatten().zip(base_marg.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rec.at_most(format!("{tag}/z{trial}/marginals"), drift, 1e-12);
            let neg: Vec<i8> = z.iter().map(|v| -v).collect();
            let tv = half_l1(&d, &fam.table(&neg)?);
            rec.at_most(format!("{tag}/z{trial}/tv_pair"), (tv - fam.tv_pair()).abs(), 1e-12);
            let inst = fam.to_aggregation_instance(&z)?;
            let mut worst: f64 = 0.0;
            for (i, marg_i) in base_marg.iter().enumerate() {
                for (s, &dm) in marg_i.iter().enumerate() {
                    let r = inst.expert_report(i, s)?[1];
                    worst = worst.max((r - dm / (1.0 / m as f64 + dm)).abs());
                }
            }
            rec.at_most(format!("{tag}/z{trial}/reports"), worst, 1e-12);
        }
    }
    Ok(())
}

/// `f*` of a `P_D` instance with every forecast shifted by `+-sqrt(eps)`,
/// signs drawn per profile, so the L2 distance to `f*` is exactly `eps`.
fn perturbed_optimum(inst: &DiscreteJoint, eps: f64, salt: u64) -> Result<impl Forecast + '_> {
    let star = Aggregator::bayes_optimal(inst)?;
    Ok(FnForecast(2, move |r: &ReportProfile| {
        let sign = if profile_noise(salt, r) < 0.5 { -1.0 } else { 1.0 };
        let v = star.apply(r)?[1] + sign * eps.sqrt();
        Ok(vec![1.0 - v, v])
    }))
}

fn reduction_roundtrip(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "reduction_roundtrip");
    let bound = |eps: f64| (1.0 + DZ_B).powi(2) * eps.sqrt();
    for (m, n) in [(2, 2), (2, 3), (4, 2)] {
        let fam = DzFamily::new(m, n, 0.02)?;
        let z = fam.random_z(&mut rng);
        let d = fam.table(&z)?;
        let inst = fam.to_aggregation_instance(&z)?;
        let tag = format!("m{m}_n{n}");
        let exact = aggregator_to_distribution(&Aggregator::bayes_optimal(&inst)?, &inst, Some(&d))?;
        rec.at_most(format!("{tag}/optimal_inverts"), exact.tv_to_reference.unwrap(), 1e-12);
        for eps in [1e-4, 1e-6] {
            let f = perturbed_optimum(&inst, eps, rng.random())?;
            let gap = expected_loss_exact(&inst, &f)?.gap_direct.unwrap();
            rec.at_most(format!("{tag}/eps{eps:e}/budget"), (gap - eps).abs(), 1e-12);
            let out = aggregator_to_distribution(&f, &inst, Some(&d))?;
            rec.at_most(format!("{tag}/eps{eps:e}/tv"), out.tv_to_reference.unwrap(), bound(eps) + 1e-9);
        }
        let zero = FnForecast(2, |_: &ReportProfile| Ok(vec![1.0, 0.0]));
        let out = aggregator_to_distribution(&zero, &inst, None)?;
        rec.check(format!("{tag}/zero_unnormalized"), !out.normalized && out.total_mass == 0.0);
    }
    Ok(())
}

fn random_pair(rng: &mut Rng, len: usize) -> Result<(DiscreteDist, DiscreteDist)> {
    Ok((DiscreteDist::from_probs(random_simplex(len, rng))?, DiscreteDist::from_probs(random_simplex(len, rng))?))
}

fn distances(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "distances");
    let mut worst_tv_h: f64 = f64::NEG_INFINITY;
    let mut worst_h_fn: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let len = rng.random_range(2..=8);
        let (a, b) = random_pair(&mut rng, len)?;
        let tv = tv_distance(&a, &b)?;
        worst_tv_h = worst_tv_h.max(tv - SQRT_2 * hellinger_sq(&a, &b)?.sqrt());
        let h: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let ea: f64 = a.probs().iter().zip(&h).map(|(p, x)| p * x).sum();
        let eb: f64 = b.probs().iter().zip(&h).map(|(p, x)| p * x).sum();
        worst_h_fn = worst_h_fn.max((ea - eb).abs() - tv);
    }
    rec.at_most("tv_le_sqrt2_hellinger", worst_tv_h, 1e-12);
    rec.at_most("tv_bounds_test_functions", worst_h_fn, 1e-12);

    for j in 0..200 {
        let len = rng.random_range(2..=8);
        let eps = rng.random_range(0.001..0.5);
        let d1 = random_simplex(len, &mut rng);
        let mut u: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean: f64 = u.iter().zip(&d1).map(|(x, p)| x * p).sum();
        u.iter_mut().for_each(|x| *x -= mean);
        let scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let d2: Vec<f64> = d1.iter().zip(&u).map(|(p, x)| p * (1.0 + eps * x / scale)).collect();
        let h = hellinger_sq(&DiscreteDist::from_probs(d1)?, &DiscreteDist::from_probs(d2)?)?;
        rec.at_most(format!("ratio_bound_{j}"), h - eps * eps / 2.0, 1e-12);
    }

    for j in 0..200 {
        let (nx, ny) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let (p, q) = random_pair(&mut rng, nx * ny)?;
        let marg =
            |d: &DiscreteDist| -> Vec<f64> { (0..nx).map(|x| d.probs()[x * ny..(x + 1) * ny].iter().sum()).collect() };
        let (px, qx) = (marg(&p), marg(&q));
        let hx = hellinger_sq(&DiscreteDist::from_probs(px.clone())?, &DiscreteDist::from_probs(qx.clone())?)?;
        let mut worst_cond: f64 = 0.0;
        for x in 0..nx {
            let cond = |d: &DiscreteDist, mass: f64| d.probs()[x * ny..(x + 1) * ny].iter().map(|v| v / mass).collect();
            let h =
                hellinger_sq(&DiscreteDist::from_probs(cond(&p, px[x]))?, &DiscreteDist::from_probs(cond(&q, qx[x]))?)?;
            worst_cond = worst_cond.max(h);
        }
        rec.at_most(format!("chain_rule_{j}"), hellinger_sq(&p, &q)? - hx - worst_cond, 1e-12);
    }

    for j in 0..50 {
        let len = rng.random_range(2..=4);
        let t = rng.random_range(1..=3u32);
        let (a, b) = random_pair(&mut rng, len)?;
        let power = |d: &DiscreteDist| -> Vec<f64> {
            (0..len.pow(t))
                .map(|mut idx| {
                    (0..t).fold(1.0, |acc, _| {
                        let v = acc * d.probs()[idx % len];
                        idx /= len;
                        v
                    })
                })
                .collect()
        };
        let direct = hellinger_sq(&DiscreteDist::from_probs(power(&a))?, &DiscreteDist::from_probs(power(&b))?)?;
        let formula = hellinger_sq_iid_product(hellinger_sq(&a, &b)?, t as u64);
        rec.at_most(format!("iid_product_{j}"), (direct - formula).abs(), 1e-12);
    }
    Ok(())
}

fn report_consistency(rec: &mut Recorder, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "report_consistency");
    for j in 0..50 {
        let model = random_binary_model(&mut rng, 3, 3)?;
        let mut worst_row: f64 = 0.0;
        for i in 0..model.n() {
            for s in 0..model.signal_sizes()[i] {
                worst_row = worst_row.max((model.expert_report(i, s)?.iter().sum::<f64>() - 1.0).abs());
            }
        }
        rec.at_most(format!("model_{j}/row_sums"), worst_row, 1e-12);
        let support = model.report_support()?;
        rec.at_most(format!("model_{j}/support_total"), (support.total() - 1.0).abs(), 1e-9);
        let p = model.p()?;
        let rho = model.rho()?;
        rec.at_most(format!("model_{j}/rho_round_trip"), (rho / (1.0 + rho) - p).abs(), 1e-12);
    }
    for j in 0..50 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(2..=3);
        let k = rng.random_range(2..=3);
        let model: CondIndepModel = random_cond_indep(n, m, k, (0.1, 0.9), &mut rng)?;
        let joint = model.to_joint()?;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for s in 0..m {
                for (a, b) in model.expert_report(i, s)?.iter().zip(joint.expert_report(i, s)?) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        rec.at_most(format!("cond_indep_{j}/via_joint"), worst, 1e-12);
        let support = joint.report_support()?;
        let cells = m.pow(n as u32) * k;
        rec.check(format!("cond_indep_{j}/support_size"), support.entries.len() <= cells);
    }
    Ok(())
}

fn cipair(rec: &mut Recorder, _seed: u64) -> Result<()> {
    for n in [2, 4, 8] {
        let mut prev = 0.0;
        let mut ratios = Vec::new();
        for e in [-24, -22, -20] {
            let eps = 2f64.powi(e);
            let pair = ci_pair_build(n, eps)?;
            let tag = format!("n{n}_eps2^{e}");
            let mut worst: f64 = 0.0;
            for m in &pair.models {
                worst = worst.max((m.expert_report(0, 0)?[1] - 0.5).abs()).max(m.expert_report(0, 1)?[1].abs());
                let r = m.rho()?.powi(n as i32 - 1);
                rec.check(format!("{tag}/rho_power_range"), r > 0.5 && r <= 1.0);
            }
            rec.at_most(format!("{tag}/reports"), worst, 1e-12);
            let gap = (pair.p[0] - pair.p[1]).abs();
            rec.at_most(format!("{tag}/prior_gap"), (gap - 64.0 * eps.sqrt() / n as f64).abs(), 1e-15);
            let h = pair.hellinger_sq_exact()?;
            rec.positive(format!("{tag}/hellinger_increasing"), h - prev);
            rec.at_most(format!("{tag}/chain_bound"), h - pair.hellinger_sq_chain_bound()?, 1e-12);
            prev = h;
            ratios.push(h / eps);
        }
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        rec.at_most(format!("n{n}/ratio_spread"), spread, 2.0);
    }
    Ok(())
}
