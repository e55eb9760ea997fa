//! Sample-based learners.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::search::{grid_then_golden, LogitGrid, ThetaGrid};
use super::{softmax, Aggregator, AggregatorKind, TableEntry, ThresholdRule};
use crate::error::{Error, Result};
use crate::model::{inv_odds, odds, ProfileKey, ReportProfile, SampleSet};

fn nonempty(samples: &SampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(())
}

fn binary(samples: &SampleSet) -> Result<()> {
    if samples.k() != 2 {
        return Err(Error::InvalidParameter(format!("binary learner given k = {}", samples.k())));
    }
    Ok(())
}

fn log2_over(delta: f64) -> f64 {
    (2.0 / delta).ln()
}

/// Outcome counts per distinct (rounded) profile, in first-seen order.
fn profile_counts(samples: &SampleSet) -> IndexMap<ProfileKey, (ReportProfile, Vec<usize>)> {
    let mut map: IndexMap<ProfileKey, (ReportProfile, Vec<usize>)> = IndexMap::new();
    for r in samples.records() {
        map.entry(r.profile.key()).or_insert_with(|| (r.profile.clone(), vec![0; samples.k()])).1[r.omega] += 1;
    }
    map
}

/// Empirical conditional outcome frequencies; unseen profiles get uniform.
pub fn erm_empirical(samples: &SampleSet) -> Result<Aggregator> {
    erm_empirical_with_default(samples, vec![1.0 / samples.k() as f64; samples.k()])
}

/// [`erm_empirical`] with a chosen fallback for unseen profiles.
pub fn erm_empirical_with_default(samples: &SampleSet, default_output: Vec<f64>) -> Result<Aggregator> {
    nonempty(samples)?;
    if default_output.len() != samples.k() {
        return Err(Error::DimensionMismatch("default output length".into()));
    }
    let entries = profile_counts(samples)
        .into_values()
        .map(|(profile, counts)| {
            let total: usize = counts.iter().sum();
            TableEntry { profile, output: counts.iter().map(|&c| c as f64 / total as f64).collect() }
        })
        .collect();
    Ok(Aggregator::from_table(AggregatorKind::EmpiricalErm, samples.k(), entries, default_output))
}

/// `P^(r, 1) / P^(r)` from empirical frequencies.
pub fn empirical_bayes(samples: &SampleSet) -> Result<Aggregator> {
    nonempty(samples)?;
    binary(samples)?;
    let t = samples.len() as f64;
    let entries = profile_counts(samples)
        .into_values()
        .map(|(profile, counts)| {
            let joint1 = counts[1] as f64 / t;
            let marginal = (counts[0] + counts[1]) as f64 / t;
            let v = joint1 / marginal;
            TableEntry { profile, output: vec![1.0 - v, v] }
        })
        .collect();
    Ok(Aggregator::from_table(AggregatorKind::EmpiricalBayes, 2, entries, vec![0.5, 0.5]))
}

/// Sample count for the empirical-Bayes guarantee on a `c`-dense model.
pub fn empirical_bayes_sample_size(m: usize, n: usize, c: f64, eps: f64, delta: f64) -> usize {
    let support = (m as f64).powi(n as i32);
    (48.0 * support / (c * eps) * (support / delta).ln()).ceil() as usize
}

/// Per-record contribution to the Bordley log-odds.
enum BordleyTerm {
    Fixed(f64),
    Free(f64),
}

fn bordley_terms(samples: &SampleSet) -> Result<Vec<(BordleyTerm, f64)>> {
    samples
        .records()
        .iter()
        .map(|rec| {
            let (mut s, mut zero, mut inf) = (0.0, false, false);
            for r in rec.profile.binary_reports() {
                if r <= 0.0 {
                    inf = true;
                } else if r >= 1.0 {
                    zero = true;
                } else {
                    s += (-r).ln_1p() - r.ln();
                }
            }
            let term = match (zero, inf) {
                (true, true) => return Err(Error::ContradictoryReports),
                (_, true) => BordleyTerm::Fixed(0.0),
                (true, false) => BordleyTerm::Fixed(1.0),
                (false, false) => BordleyTerm::Free(s),
            };
            Ok((term, rec.omega as f64))
        })
        .collect()
}

/// Result of the one-dimensional theta search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub empirical_loss: f64,
}

/// Empirical-loss minimizer over the Bordley family.
pub fn fit_theta(samples: &SampleSet, grid: &ThetaGrid) -> Result<ThetaFit> {
    nonempty(samples)?;
    binary(samples)?;
    grid.validate()?;
    let terms = bordley_terms(samples)?;
    let scale = samples.n() as f64 - 1.0;
    let t = terms.len() as f64;
    let loss = |u: f64| {
        terms
            .iter()
            .map(|(term, w)| {
                let f = match term {
                    BordleyTerm::Fixed(v) => *v,
                    BordleyTerm::Free(s) => super::logistic(-(scale * u + s)),
                };
                (f - w) * (f - w)
            })
            .sum::<f64>()
            / t
    };
    let (u, fu) = grid_then_golden(&grid.log_points(), grid.rel_width.ln_1p(), loss);
    Ok(ThetaFit { theta: u.exp(), empirical_loss: fu })
}

/// `bordley(theta^)` for the empirical-loss minimizer `theta^`.
pub fn erm_theta(samples: &SampleSet, grid: &ThetaGrid) -> Result<Aggregator> {
    let fit = fit_theta(samples, grid)?;
    Aggregator::bordley(fit.theta, samples.n())
}

/// Result of the multi-outcome search: implied prior `q` and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiThetaFit {
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub empirical_loss: f64,
}

/// Coordinate descent over logits `z` with `q = softmax(z)` and
/// `theta_j = q_j^-(n-1)`; `z_0` is pinned to 0.
pub fn fit_multi_theta(samples: &SampleSet, grid: &LogitGrid) -> Result<MultiThetaFit> {
    nonempty(samples)?;
    grid.validate()?;
    let (k, scale) = (samples.k(), samples.n() as f64 - 1.0);
    let data: Vec<(Vec<f64>, usize)> = samples
        .records()
        .iter()
        .map(|rec| {
            let mut a = vec![0.0; k];
            for row in rec.profile.rows() {
                for (acc, x) in a.iter_mut().zip(row) {
                    *acc += x.ln();
                }
            }
            if a.iter().all(|x| *x == f64::NEG_INFINITY) {
                return Err(Error::AllZeroLikelihood);
            }
            Ok((a, rec.omega))
        })
        .collect::<Result<_>>()?;
    let t = data.len() as f64;
    let loss = |z: &[f64]| {
        let mut logs = vec![0.0; k];
        data.iter()
            .map(|(a, w)| {
                for j in 0..k {
                    logs[j] = a[j] - scale * z[j];
                }
                let f = softmax(&logs).expect("checked above");
                crate::metrics::record_loss(&f, *w)
            })
            .sum::<f64>()
            / t
    };
    let pts = grid.points();
    let mut z = vec![0.0; k];
    let mut current = loss(&z);
    for _ in 0..grid.max_rounds {
        let mut improved = false;
        for j in 1..k {
            let (x, fx) = grid_then_golden(&pts, grid.tol, |v| {
                let mut trial = z.clone();
                trial[j] = v;
                loss(&trial)
            });
            if fx < current {
                z[j] = x;
                current = fx;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let q = softmax(&z).expect("finite logits");
    let log_theta: Vec<f64> = q.iter().map(|qj| -scale * qj.ln()).collect();
    let top = log_theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let theta = log_theta.iter().map(|l| (l - top).exp().max(f64::MIN_POSITIVE)).collect();
    Ok(MultiThetaFit { q, theta, empirical_loss: current })
}

/// Multi-outcome Bordley aggregator fitted by [`fit_multi_theta`].
pub fn multi_erm_theta(samples: &SampleSet, grid: &LogitGrid) -> Result<Aggregator> {
    Aggregator::multi_bordley(fit_multi_theta(samples, grid)?.theta)
}

/// Ratio estimate of the prior odds with its class counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho_hat: f64,
    pub count0: usize,
    pub count1: usize,
    pub numerator: f64,
    pub denominator: f64,
}

/// `mean_{w=0} sum_i r_i` over `mean_{w=1} sum_i (1 - r_i)`.
pub fn estimate_rho(samples: &SampleSet) -> Result<RhoEstimate> {
    binary(samples)?;
    let (mut s0, mut s1, mut c0, mut c1) = (0.0, 0.0, 0usize, 0usize);
    for rec in samples.records() {
        let total: f64 = rec.profile.binary_reports().iter().sum();
        if rec.omega == 0 {
            s0 += total;
            c0 += 1;
        } else {
            s1 += samples.n() as f64 - total;
            c1 += 1;
        }
    }
    if c0 == 0 {
        return Err(Error::MissingOutcomeClass(0));
    }
    if c1 == 0 {
        return Err(Error::MissingOutcomeClass(1));
    }
    let (numerator, denominator) = (s0 / c0 as f64, s1 / c1 as f64);
    if denominator == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(RhoEstimate { rho_hat: numerator / denominator, count0: c0, count1: c1, numerator, denominator })
}

/// Samples that make `|rho^ - rho| / rho <= 4 delta_acc` hold w.p. `1 - 4 delta`.
pub fn rho_sample_size(p: f64, mu0: f64, n: usize, delta_acc: f64, delta: f64) -> usize {
    let l = log2_over(delta);
    (6.0 / ((1.0 - p) * mu0 * n as f64 * delta_acc * delta_acc) * l + 12.0 / p.min(1.0 - p) * l).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BelowEps,
    AboveHalfEps,
}

/// `ceil((40 / eps) log(2 / delta))`.
pub fn regime_sample_size(eps: f64, delta: f64) -> usize {
    (40.0 / eps * log2_over(delta)).ceil() as usize
}

/// Compares the empirical mean of `1{w = 0} * mean_i r_i` with `3 eps / 4`.
pub fn mean_regime_test(samples: &SampleSet, eps: f64, delta: f64) -> Result<Regime> {
    binary(samples)?;
    let needed = regime_sample_size(eps, delta);
    if samples.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: samples.len() });
    }
    let n = samples.n() as f64;
    let mean = samples
        .records()
        .iter()
        .filter(|r| r.omega == 0)
        .map(|r| r.profile.binary_reports().iter().sum::<f64>() / n)
        .sum::<f64>()
        / samples.len() as f64;
    Ok(if mean < 0.75 * eps { Regime::BelowEps } else { Regime::AboveHalfEps })
}

/// Sample budget of the strongly informative learner, in consumption order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrongBudget {
    pub regime: usize,
    pub rho: usize,
    pub task2: usize,
}

impl StrongBudget {
    pub fn total(&self) -> usize {
        self.regime + self.rho + self.task2
    }
}

/// Budget with the unknown `(1 - p) mu_0` and `min(p, 1 - p)` replaced by
/// their lower bound `eps / 4` in the above-threshold regime.
pub fn strong_budget(n: usize, gamma: f64, eps: f64, delta: f64) -> StrongBudget {
    let l = log2_over(delta);
    let floor = eps / 4.0;
    let acc = gamma / (1.0 + gamma) / 4.0;
    let rho = 6.0 / (floor * n as f64 * acc * acc) * l + 12.0 / floor * l;
    let task2 = (12.0 / floor * l).max(2.0 * l / (floor * (2.0 / eps).ln()));
    StrongBudget { regime: regime_sample_size(eps, delta), rho: rho.ceil() as usize, task2: task2.ceil() as usize }
}

/// Learner for experts whose signals all move the odds by a factor `1 + gamma`.
///
/// Consumes the regime-test block first, then the rho block, then uses the
/// rest to pick the outcome `u` and the count threshold.
pub fn strongly_informative_learn(
    samples: &SampleSet,
    gamma: f64,
    eps: f64,
    delta: f64,
    n: usize,
) -> Result<Aggregator> {
    binary(samples)?;
    if samples.n() != n {
        return Err(Error::DimensionMismatch(format!("samples have {} experts, expected {n}", samples.n())));
    }
    if !(gamma > 0.0 && eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter("need gamma > 0 and eps, delta in (0, 1)".into()));
    }
    let l_eps = (2.0 / eps).ln();
    if (n as f64) < 32.0 * l_eps {
        return Err(Error::PreconditionViolated(format!("n = {n} < 32 log(2/eps) = {:.2}", 32.0 * l_eps)));
    }
    let margin = gamma / (1.0 + gamma);
    let need = 8.0 * (2.0 / n as f64 * l_eps).sqrt();
    if margin < need {
        return Err(Error::PreconditionViolated(format!("gamma/(1+gamma) = {margin:.4} < {need:.4}")));
    }
    let budget = strong_budget(n, gamma, eps, delta);
    if samples.len() < budget.total() {
        return Err(Error::InsufficientSamples { needed: budget.total(), got: samples.len() });
    }
    let regime_block = samples.slice(0, budget.regime);
    if mean_regime_test(&regime_block, eps, delta)? == Regime::BelowEps {
        return Ok(Aggregator::averaging(2));
    }
    let rho_block = samples.slice(budget.regime, budget.regime + budget.rho);
    let rho_hat = estimate_rho(&rho_block)?.rho_hat;

    let rest = samples.slice(budget.regime + budget.rho, samples.len());
    let a = (n as f64 / 2.0 * l_eps).sqrt();
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for rec in rest.records() {
        let u = rec.omega;
        let probe = ThresholdRule { n, rho_hat, u, threshold: 0.0, a };
        sums[u] += probe.count(&rec.profile) as f64;
        counts[u] += 1;
    }
    if let Some(u) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingOutcomeClass(u));
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let screen = n as f64 / 2.0 - a;
    let u = match (means[0] >= screen, means[1] >= screen) {
        (false, false) => return Err(Error::NoQualifyingIndex),
        (true, false) => 0,
        (false, true) => 1,
        (true, true) => usize::from(means[1] >= means[0]),
    };
    Ok(Aggregator::threshold(ThresholdRule { n, rho_hat, u, threshold: means[u] - 2.0 * a, a }))
}

/// `ceil(54 e gamma n / eps * log(2 / delta))`.
pub fn weak_sample_size(gamma: f64, n: usize, eps: f64, delta: f64) -> usize {
    (54.0 * std::f64::consts::E * gamma * n as f64 / eps * log2_over(delta)).ceil() as usize
}

/// Grouped-product estimate of rho for weakly informative experts, returned
/// as `bordley(rho^)`.
pub fn weakly_informative_learn(samples: &SampleSet, gamma: f64, n: usize) -> Result<Aggregator> {
    binary(samples)?;
    nonempty(samples)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if samples.n() != n {
        return Err(Error::DimensionMismatch(format!("samples have {} experts, expected {n}", samples.n())));
    }
    // The small slack keeps 1/0.05 from flooring to 19.
    let g = ((1.0 / gamma + 1e-9).floor() as usize).max(1);
    let counts = samples.class_counts();
    let class = usize::from(counts[1] > counts[0]);
    let terms: Vec<f64> = samples
        .records()
        .iter()
        .filter(|r| r.omega == class)
        .flat_map(|r| r.profile.binary_reports())
        .map(|r| if class == 0 { odds(r) } else { inv_odds(r) })
        .collect();
    let groups = terms.len() / g;
    if groups == 0 {
        return Err(Error::InsufficientGroups(g));
    }
    let mean = terms.chunks_exact(g).map(|c| c.iter().product::<f64>()).sum::<f64>() / groups as f64;
    let root = mean.powf(1.0 / g as f64);
    let rho_hat = if class == 0 { root } else { 1.0 / root };
    Aggregator::theta_kind(AggregatorKind::WeakInformative, rho_hat, n)
}
