//! Lower-bound constructions.
//!
//! The `D_z` family perturbs a geometric base distribution on `S^n` bucket by
//! bucket, where a bucket fixes the first `n - 2` coordinates. The last two
//! coordinates `(x, y)` are split into quadrants at `m / 2`; the two diagonal
//! quadrants move by `+z_b c eps / W` and the off-diagonal ones by the
//! opposite amount, which leaves every single-coordinate marginal unchanged.
//!
//! The CiPair is two conditionally independent models with two signals per
//! expert whose reports are always 0.5 or 0 but whose priors differ.

use std::f64::consts::E;
use std::sync::Arc;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::Forecast;
use crate::error::{Error, Result};
use crate::metrics::{half_l1, hellinger_sq, DiscreteDist};
use crate::model::{CondIndepModel, DiscreteJoint, InfoStructure, ReportProfile, DEFAULT_CELL_CAP};
use crate::rng::{self, Rng};

/// Perturbation constant of the `D_z` family.
pub const DZ_C: f64 = 20.0;
/// Uniform bound: every `D_z` entry is at most `B / m^n`.
pub const DZ_B: f64 = E + 0.5;
/// Prior-gap constant of the CiPair.
pub const CI_C: f64 = 32.0;

fn support_size(m: usize, n: usize) -> Result<usize> {
    let cells = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if cells > DEFAULT_CELL_CAP {
        return Err(Error::SupportTooLarge { cells, cap: DEFAULT_CELL_CAP });
    }
    Ok(cells as usize)
}

fn base_weights(size: usize) -> (f64, Vec<f64>) {
    let gamma = 1.0 + 1.0 / size as f64;
    let powers: Vec<f64> = (1..=size).map(|l| gamma.powf(l as f64)).collect();
    (powers.iter().sum(), powers)
}

/// `D_base(s) = gamma^num(s) / W` with `num` the 1-based lexicographic index.
pub fn dz_base(m: usize, n: usize) -> Result<DiscreteDist> {
    if m % 2 == 1 {
        return Err(Error::OddSignalSpace(m));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter("need m, n >= 1".into()));
    }
    let size = support_size(m, n)?;
    let (w, powers) = base_weights(size);
    DiscreteDist::from_probs(powers.into_iter().map(|x| x / w).collect())
}

/// Parameters and derived constants of one `D_z` family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DzFamily {
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    pub gamma: f64,
    pub w: f64,
    base: Vec<f64>,
}

impl DzFamily {
    pub fn new(m: usize, n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
        }
        if m == 0 || m % 2 == 1 {
            return Err(Error::OddSignalSpace(m));
        }
        if !(eps > 0.0 && eps < 1.0 / 40.0) {
            return Err(Error::EpsilonTooLarge { eps, bound: 1.0 / 40.0 });
        }
        let size = support_size(m, n)?;
        let (w, powers) = base_weights(size);
        Ok(Self { m, n, eps, gamma: 1.0 + 1.0 / size as f64, w, base: powers.into_iter().map(|x| x / w).collect() })
    }

    pub fn size(&self) -> usize {
        self.base.len()
    }

    pub fn buckets(&self) -> usize {
        self.size() / (self.m * self.m)
    }

    /// `c eps / W`.
    pub fn magnitude(&self) -> f64 {
        DZ_C * self.eps / self.w
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Bucket and quadrant sign (+1 on the diagonal quadrants) of a cell.
    pub fn cell_sign(&self, lin: usize) -> (usize, f64) {
        let m = self.m;
        let (x, y) = ((lin / m) % m, lin % m);
        let same = (x < m / 2) == (y < m / 2);
        (lin / (m * m), if same { 1.0 } else { -1.0 })
    }

    /// Uniformly random sign vector.
    pub fn random_z(&self, rng: &mut Rng) -> Vec<i8> {
        (0..self.buckets()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
    }

    fn check_z(&self, z: &[i8]) -> Result<()> {
        if z.len() != self.buckets() {
            return Err(Error::SignVectorMismatch { expected: self.buckets(), got: z.len() });
        }
        if z.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidParameter("sign entries must be +1 or -1".into()));
        }
        Ok(())
    }

    /// The perturbed table `D_z`.
    pub fn table(&self, z: &[i8]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let mag = self.magnitude();
        Ok(self
            .base
            .iter()
            .enumerate()
            .map(|(lin, b)| {
                let (bucket, sign) = self.cell_sign(lin);
                b + z[bucket] as f64 * sign * mag
            })
            .collect())
    }

    pub fn build(&self, z: &[i8]) -> Result<DiscreteDist> {
        DiscreteDist::from_probs(self.table(z)?)
    }

    /// `TV(D_z, D_-z) = m^n c eps / W`.
    pub fn tv_pair(&self) -> f64 {
        self.size() as f64 * self.magnitude()
    }

    /// Exact squared Hellinger distance between the `+` and `-` conditionals
    /// of one bucket.
    pub fn bucket_hellinger_sq(&self, bucket: usize) -> f64 {
        let mm = self.m * self.m;
        let mag = self.magnitude();
        let cells = bucket * mm..(bucket + 1) * mm;
        let mass: f64 = self.base[cells.clone()].iter().sum();
        let bc: f64 = cells
            .map(|lin| {
                let s = self.cell_sign(lin).1 * mag;
                ((self.base[lin] + s) * (self.base[lin] - s)).sqrt()
            })
            .sum();
        1.0 - bc / mass
    }

    /// Per-coordinate marginals of a table on `S^n`.
    pub fn coordinate_marginals(&self, table: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let stride = self.m.pow((self.n - 1 - i) as u32);
                let mut out = vec![0.0; self.m];
                for (lin, p) in table.iter().enumerate() {
                    out[(lin / stride) % self.m] += p;
                }
                out
            })
            .collect()
    }

    /// The aggregation instance `P_D`: fair coin, uniform signals given
    /// `w = 0`, `D_z` given `w = 1`.
    pub fn to_aggregation_instance(&self, z: &[i8]) -> Result<DiscreteJoint> {
        to_aggregation_instance(&self.table(z)?, self.m, self.n)
    }
}

/// `P_D` for an arbitrary distribution `d` on `S^n`.
pub fn to_aggregation_instance(d: &[f64], m: usize, n: usize) -> Result<DiscreteJoint> {
    let size = support_size(m, n)?;
    if d.len() != size {
        return Err(Error::DimensionMismatch(format!("table has {} cells, expected {size}", d.len())));
    }
    let prob = d.iter().flat_map(|&x| [0.5 / size as f64, 0.5 * x]).collect();
    DiscreteJoint::build(n, vec![m; n], 2, prob)
}

/// Table recovered from an aggregator on a `P_D` instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredDistribution {
    pub table: Vec<f64>,
    pub total_mass: f64,
    pub normalized: bool,
    pub tv_to_reference: Option<f64>,
}

/// Inverts `f* = D / (1/m^n + D)` after truncating `f` at `B / (1 + B)`.
pub fn aggregator_to_distribution(
    f: &dyn Forecast,
    instance: &DiscreteJoint,
    reference: Option<&[f64]>,
) -> Result<RecoveredDistribution> {
    let size = instance.signal_count();
    let tables = instance.report_tables();
    let cap = DZ_B / (1.0 + DZ_B);
    let mut table = Vec::with_capacity(size);
    for lin in 0..size {
        let sig = instance.decode(lin);
        let mut data = Vec::with_capacity(2 * sig.len());
        for (i, &s) in sig.iter().enumerate() {
            let row = tables[i][s].as_ref().ok_or(Error::ZeroProbabilitySignal { expert: i, signal: s })?;
            data.extend_from_slice(row);
        }
        let v = f.forecast(&ReportProfile::new(sig.len(), 2, data)?)?[1].clamp(0.0, cap);
        table.push(v / (size as f64 * (1.0 - v)));
    }
    let total_mass: f64 = table.iter().sum();
    let tv_to_reference = match reference {
        Some(d) if d.len() != size => return Err(Error::SupportMismatch("reference table size".into())),
        Some(d) => Some(half_l1(&table, d)),
        None => None,
    };
    Ok(RecoveredDistribution { normalized: (total_mass - 1.0).abs() <= 1e-9, table, total_mass, tv_to_reference })
}

/// Two conditionally independent models with identical report maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CiPair {
    pub n: usize,
    pub eps: f64,
    pub p: [f64; 2],
    pub models: [CondIndepModel; 2],
}

/// Builds the pair; signal 0 is `a` (report 1/2), signal 1 is `b` (report 0).
pub fn ci_pair_build(n: usize, eps: f64) -> Result<CiPair> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    let bound = 2f64.powi(-18);
    if !(eps > 0.0 && eps < bound) {
        return Err(Error::EpsilonTooLarge { eps, bound });
    }
    let nf = n as f64;
    let shift = CI_C * eps.sqrt() / nf;
    let base = 0.5 - 1.0 / (16.0 * nf);
    let p = [base + shift, base - shift];
    let model = |p: f64| {
        let rho = p / (1.0 - p);
        CondIndepModel::build(vec![1.0 - p, p], vec![vec![vec![rho, 1.0 - rho], vec![1.0, 0.0]]; n])
    };
    Ok(CiPair { n, eps, p, models: [model(p[0])?, model(p[1])?] })
}

impl CiPair {
    /// Full (joint signal, outcome) distribution of model `which` (0 or 1).
    pub fn joint_dist(&self, which: usize) -> Result<DiscreteDist> {
        DiscreteDist::from_probs(self.models[which].to_joint()?.prob().to_vec())
    }

    pub fn hellinger_sq_exact(&self) -> Result<f64> {
        hellinger_sq(&self.joint_dist(0)?, &self.joint_dist(1)?)
    }

    /// Outcome-marginal term plus the worst outcome-conditional term.
    pub fn hellinger_sq_chain_bound(&self) -> Result<f64> {
        let outcome = hellinger_sq(
            &DiscreteDist::from_probs(self.models[0].prior().to_vec())?,
            &DiscreteDist::from_probs(self.models[1].prior().to_vec())?,
        )?;
        let worst = (0..2)
            .map(|w| {
                let one = |m: &CondIndepModel| DiscreteDist::from_probs(m.cond()[0][w].clone());
                let h = hellinger_sq(&one(&self.models[0])?, &one(&self.models[1])?)?;
                Ok(1.0 - (1.0 - h).powi(self.n as i32))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(outcome + worst)
    }
}

/// Custom decision rule: draws, `d1`, `d2` to a guess of 1 or 2.
pub type DecisionFn = dyn Fn(&[usize], &DiscreteDist, &DiscreteDist) -> u8 + Send + Sync;

/// Decision rule for "which of two known distributions produced these draws".
#[derive(Clone)]
pub enum Distinguisher {
    LikelihoodRatio,
    TvNearest,
    Custom(Arc<DecisionFn>),
}

impl std::fmt::Debug for Distinguisher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Distinguisher {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "likelihood_ratio" => Ok(Self::LikelihoodRatio),
            "tv_nearest" => Ok(Self::TvNearest),
            other => Err(Error::InvalidDistinguisher(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LikelihoodRatio => "likelihood_ratio",
            Self::TvNearest => "tv_nearest",
            Self::Custom(_) => "custom",
        }
    }

    /// Guess 1 or 2; ties go to 1.
    pub fn guess(&self, draws: &[usize], d1: &DiscreteDist, d2: &DiscreteDist) -> u8 {
        match self {
            Self::LikelihoodRatio => {
                let llr: f64 = draws.iter().map(|&x| d1.probs()[x].ln() - d2.probs()[x].ln()).sum();
                if llr >= 0.0 || llr.is_nan() {
                    1
                } else {
                    2
                }
            }
            Self::TvNearest => {
                let mut emp = vec![0.0; d1.len()];
                for &x in draws {
                    emp[x] += 1.0;
                }
                let t = draws.len().max(1) as f64;
                emp.iter_mut().for_each(|c| *c /= t);
                if half_l1(&emp, d1.probs()) <= half_l1(&emp, d2.probs()) {
                    1
                } else {
                    2
                }
            }
            Self::Custom(f) => f(draws, d1, d2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishRow {
    pub trial: usize,
    pub truth: u8,
    pub guess: u8,
    #[serde(rename = "T")]
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishSummary {
    pub schema_version: String,
    pub distinguisher: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub trials: usize,
    pub empirical_error: f64,
    pub stderr: f64,
    pub hellinger_sq: f64,
    #[serde(rename = "floor_sqrtT")]
    pub floor_sqrt_t: f64,
    pub floor_exp: f64,
}

/// `1/2 - sqrt(T/2) d_H` and `(1/4)(1 - d_H^2)^(2T)`.
pub fn distinguishing_floors(h2: f64, t: usize) -> (f64, f64) {
    let t = t as f64;
    (0.5 - (t / 2.0).sqrt() * h2.sqrt(), 0.25 * (1.0 - h2).powf(2.0 * t))
}

/// Runs `trials` rounds of "draw `T` samples from a random one of `d1, d2`
/// and guess which"; rows come back in trial order.
pub fn distinguish_experiment(
    d1: &DiscreteDist,
    d2: &DiscreteDist,
    t: usize,
    trials: usize,
    distinguisher: &Distinguisher,
    seed: u64,
) -> Result<(Vec<DistinguishRow>, DistinguishSummary)> {
    if d1.labels() != d2.labels() {
        return Err(Error::SupportMismatch("distinguishing needs co-indexed distributions".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let bad = |e: rand::distr::weighted::Error| Error::NotADistribution(e.to_string());
    let samplers = [WeightedIndex::new(d1.probs()).map_err(bad)?, WeightedIndex::new(d2.probs()).map_err(bad)?];
    let rows: Vec<DistinguishRow> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::substream(seed, "distinguish", trial as u64);
            let truth: u8 = if rng.random::<bool>() { 1 } else { 2 };
            let sampler = &samplers[truth as usize - 1];
            let draws: Vec<usize> = (0..t).map(|_| sampler.sample(&mut rng)).collect();
            DistinguishRow { trial, truth, guess: distinguisher.guess(&draws, d1, d2), t }
        })
        .collect();
    let errors = rows.iter().filter(|r| r.truth != r.guess).count();
    let err = errors as f64 / trials as f64;
    let h2 = hellinger_sq(d1, d2)?;
    let (floor_sqrt_t, floor_exp) = distinguishing_floors(h2, t);
    let summary = DistinguishSummary {
        schema_version: "1".into(),
        distinguisher: distinguisher.name().into(),
        t,
        trials,
        empirical_error: err,
        stderr: (err * (1.0 - err) / trials as f64).sqrt(),
        hellinger_sq: h2,
        floor_sqrt_t,
        floor_exp,
    };
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_small_case() {
        let d = dz_base(2, 2).unwrap();
        let gamma: f64 = 1.0 + 1.0 / 4.0;
        for (i, p) in d.probs().iter().enumerate() {
            assert!((p / d.probs()[0] - gamma.powi(i as i32)).abs() < 1e-12);
        }
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(dz_base(3, 2), Err(Error::OddSignalSpace(3))));
    }

    #[test]
    fn guards() {
        assert!(matches!(DzFamily::new(2, 2, 0.03), Err(Error::EpsilonTooLarge { .. })));
        let fam = DzFamily::new(2, 3, 0.01).unwrap();
        assert!(matches!(fam.table(&[1]), Err(Error::SignVectorMismatch { expected: 2, got: 1 })));
        assert!(matches!(ci_pair_build(4, 1e-5), Err(Error::EpsilonTooLarge { .. })));
        assert!(matches!(Distinguisher::from_name("oracle"), Err(Error::InvalidDistinguisher(_))));
    }

    #[test]
    fn cipair_reports() {
        let pair = ci_pair_build(4, 1e-6).unwrap();
        for m in &pair.models {
            assert!((m.expert_report(0, 0).unwrap()[1] - 0.5).abs() < 1e-12);
            assert_eq!(m.expert_report(0, 1).unwrap()[1], 0.0);
            let rho = m.rho().unwrap();
            assert!(rho.powi(3) > 0.5 && rho.powi(3) <= 1.0);
        }
        assert!(((pair.p[0] - pair.p[1]) - 64.0 * 1e-3 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn identical_distributions_are_coin_flips() {
        let d = DiscreteDist::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let (_, s) = distinguish_experiment(&d, &d, 20, 4000, &Distinguisher::LikelihoodRatio, 3).unwrap();
        assert!((s.empirical_error - 0.5).abs() < 3.0 * s.stderr + 1e-9);
        assert_eq!(s.floor_sqrt_t, 0.5);
    }
}
