//! Discrete information structures.
//!
//! A joint table is stored flat: the cell for joint signal `s` and outcome
//! `w` lives at `lin(s) * k + w`, where `lin` is the lexicographic index of
//! `s` with expert 0 as the most significant digit. Reports are posterior
//! rows `r[i][j] = P(w = j | s_i)`; everything downstream of the model only
//! sees those rows.

use std::io::{Read, Write};

use indexmap::IndexMap;
use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Default cap on the number of (joint signal, outcome) cells we enumerate.
pub const DEFAULT_CELL_CAP: u128 = 10_000_000;
/// Relative slack under which an input table is silently renormalized.
pub const NORMALIZE_TOL: f64 = 1e-6;
/// Tolerance for "is a probability vector" checks on computed rows.
pub const ROW_TOL: f64 = 1e-9;

/// Rounds a report to 12 decimals, as an integer key.
pub fn round_key(x: f64) -> i64 {
    (x * 1e12).round() as i64
}

/// Inverse of [`round_key`].
pub fn key_value(k: i64) -> f64 {
    k as f64 / 1e12
}

/// `r / (1 - r)` with `r = 1` mapped to `+inf`.
pub fn odds(r: f64) -> f64 {
    if r >= 1.0 {
        f64::INFINITY
    } else {
        r / (1.0 - r)
    }
}

/// `(1 - r) / r` with `r = 0` mapped to `+inf`.
pub fn inv_odds(r: f64) -> f64 {
    if r <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - r) / r
    }
}

pub(crate) fn normalize(v: &[f64], what: &str) -> Result<Vec<f64>> {
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::NotADistribution(format!("{what} has entry {x}")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > NORMALIZE_TOL {
        return Err(Error::NotADistribution(format!("{what} sums to {s}")));
    }
    Ok(v.iter().map(|x| x / s).collect())
}

pub(crate) fn cell_count(sizes: &[usize], k: usize) -> u128 {
    sizes.iter().fold(k as u128, |acc, &m| acc.saturating_mul(m as u128))
}

fn check_cap(sizes: &[usize], k: usize, cap: u128) -> Result<usize> {
    let cells = cell_count(sizes, k);
    if cells > cap {
        return Err(Error::SupportTooLarge { cells, cap });
    }
    Ok((cells / k as u128) as usize)
}

fn check_shape(n: usize, sizes: &[usize], k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::DimensionMismatch("need at least one expert".into()));
    }
    if sizes.len() != n {
        return Err(Error::DimensionMismatch(format!("{} signal sizes for {n} experts", sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::DimensionMismatch("empty signal space".into()));
    }
    OutcomeSpace::new(k).map(|_| ())
}

/// Advances a mixed-radix counter; returns false after the last value.
fn odometer_step(digits: &mut [usize], sizes: &[usize]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < sizes[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// The outcome set `{0, .., k-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    pub k: usize,
}

impl OutcomeSpace {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::DimensionMismatch(format!("need k >= 2, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn is_binary(&self) -> bool {
        self.k == 2
    }
}

/// Hashable identity of a report profile: every entry rounded to 12 decimals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProfileKey(pub Vec<i64>);

/// One round of reports, `n` rows of `k` outcome probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportProfile {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl ReportProfile {
    /// Validates that every row is a probability vector.
    pub fn new(n: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * k || n == 0 || k < 2 {
            return Err(Error::DimensionMismatch(format!("{} entries for {n} x {k} profile", data.len())));
        }
        for row in data.chunks(k) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|x| !(0.0..=1.0 + ROW_TOL).contains(x)) || (s - 1.0).abs() > ROW_TOL {
                return Err(Error::NotADistribution(format!("report row {row:?}")));
            }
        }
        Ok(Self { n, k, data })
    }

    /// Binary profile from the reports `r_i = P(w = 1 | s_i)`.
    pub fn from_binary(r: &[f64]) -> Result<Self> {
        let data = r.iter().flat_map(|&x| [1.0 - x, x]).collect();
        Self::new(r.len(), 2, data)
    }

    pub(crate) fn from_raw(n: usize, k: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * k);
        Self { n, k, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k)
    }

    /// `r_i = r_{i1}`, the report on outcome 1.
    pub fn binary(&self, i: usize) -> f64 {
        self.data[i * self.k + 1]
    }

    pub fn binary_reports(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.binary(i)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn key(&self) -> ProfileKey {
        ProfileKey(self.data.iter().map(|&x| round_key(x)).collect())
    }

    /// Rows with every entry rounded to 12 decimals.
    pub fn rounded_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.iter().map(|&x| key_value(round_key(x))).collect()).collect()
    }
}

/// One support point of the report pushforward: `mass[w] = P(r, w)`.
#[derive(Clone, Debug)]
pub struct SupportEntry {
    pub profile: ReportProfile,
    pub mass: Vec<f64>,
}

impl SupportEntry {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `P(w | r)`.
    pub fn posterior(&self) -> Vec<f64> {
        let t = self.total();
        self.mass.iter().map(|m| m / t).collect()
    }
}

/// Exact distribution of (report profile, outcome).
#[derive(Clone, Debug)]
pub struct ReportSupport {
    pub k: usize,
    pub entries: Vec<SupportEntry>,
}

impl ReportSupport {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(SupportEntry::total).sum()
    }

    /// Flattened `(profile, outcome, probability)` triples with positive mass.
    pub fn triples(&self) -> impl Iterator<Item = (&ReportProfile, usize, f64)> {
        self.entries
            .iter()
            .flat_map(|e| e.mass.iter().enumerate().filter(|(_, m)| **m > 0.0).map(move |(w, m)| (&e.profile, w, *m)))
    }
}

/// Normalizes a joint-mass row; binary rows are stored as `(1 - v, v)` so
/// they survive the one-column CSV form bit for bit.
fn posterior_row(row: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return None;
    }
    if row.len() == 2 {
        let v = row[1] / total;
        return Some(vec![1.0 - v, v]);
    }
    Some(row.iter().map(|x| x / total).collect())
}

/// Per expert and signal, the report row (None when `P(s_i) = 0`).
pub type ReportTables = Vec<Vec<Option<Vec<f64>>>>;

/// Anything that defines a distribution over (joint signal, outcome).
pub trait InfoStructure {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    fn signal_sizes(&self) -> &[usize];

    /// `P(s_i, w)` indexed `[s_i][w]`.
    fn expert_marginal(&self, i: usize) -> Vec<Vec<f64>>;

    /// Visits every joint signal of positive mass with its `P(s, .)` row.
    fn for_each_signal(&self, cap: u128, visit: &mut dyn FnMut(&[usize], &[f64])) -> Result<()>;

    /// `t` i.i.d. draws of (joint signal, outcome).
    fn draw(&self, t: usize, rng: &mut Rng) -> Result<Vec<(Vec<usize>, usize)>>;

    fn describe(&self) -> String;

    fn outcome_prior(&self) -> Vec<f64> {
        let mut prior = vec![0.0; self.k()];
        for row in self.expert_marginal(0) {
            for (w, x) in row.iter().enumerate() {
                prior[w] += x;
            }
        }
        prior
    }

    /// Expert `i`'s posterior over outcomes after seeing `s_i`.
    fn expert_report(&self, i: usize, s_i: usize) -> Result<Vec<f64>> {
        if i >= self.n() || s_i >= self.signal_sizes()[i] {
            return Err(Error::DimensionMismatch(format!("no signal {s_i} for expert {i}")));
        }
        posterior_row(&self.expert_marginal(i)[s_i]).ok_or(Error::ZeroProbabilitySignal { expert: i, signal: s_i })
    }

    fn report_tables(&self) -> ReportTables {
        (0..self.n()).map(|i| self.expert_marginal(i).into_iter().map(|row| posterior_row(&row)).collect()).collect()
    }

    fn report_support(&self) -> Result<ReportSupport> {
        self.report_support_capped(DEFAULT_CELL_CAP)
    }

    /// Pushforward of the model onto (profile, outcome), merging profiles
    /// that agree to 12 decimals.
    fn report_support_capped(&self, cap: u128) -> Result<ReportSupport> {
        let (n, k) = (self.n(), self.k());
        let tables = self.report_tables();
        let mut merged: IndexMap<ProfileKey, SupportEntry> = IndexMap::new();
        self.for_each_signal(cap, &mut |sig, mass| {
            let mut data = Vec::with_capacity(n * k);
            for (i, &s) in sig.iter().enumerate() {
                data.extend_from_slice(tables[i][s].as_ref().expect("reachable signal"));
            }
            let profile = ReportProfile::from_raw(n, k, data);
            let entry = merged.entry(profile.key()).or_insert_with(|| SupportEntry { profile, mass: vec![0.0; k] });
            for (acc, m) in entry.mass.iter_mut().zip(mass) {
                *acc += m;
            }
        })?;
        Ok(ReportSupport { k, entries: merged.into_values().collect() })
    }

    /// `t` i.i.d. (profile, outcome) records; a pure function of `seed`.
    fn sample(&self, t: usize, seed: u64) -> Result<SampleSet> {
        let (n, k) = (self.n(), self.k());
        let mut rng = rng::substream(seed, "sample", 0);
        let tables = self.report_tables();
        let records = self
            .draw(t, &mut rng)?
            .into_iter()
            .map(|(sig, omega)| {
                let mut data = Vec::with_capacity(n * k);
                for (i, &s) in sig.iter().enumerate() {
                    data.extend_from_slice(tables[i][s].as_ref().expect("drawn signal"));
                }
                Record { profile: ReportProfile::from_raw(n, k, data), omega }
            })
            .collect();
        Ok(SampleSet { n, k, records, seed: Some(seed), source: self.describe() })
    }

    /// `p = P(w = 1)` for a binary model.
    fn p(&self) -> Result<f64> {
        if self.k() != 2 {
            return Err(Error::InvalidParameter("p is defined for binary models".into()));
        }
        Ok(self.outcome_prior()[1])
    }

    /// Prior odds `p / (1 - p)`.
    fn rho(&self) -> Result<f64> {
        let p = self.p()?;
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::DegeneratePrior(p));
        }
        Ok(p / (1.0 - p))
    }

    /// `mu_0 = (1/n) sum_i E[r_i | w = 0]` and `mu_1 = (1/n) sum_i E[1 - r_i | w = 1]`.
    fn mu(&self) -> Result<(f64, f64)> {
        let p = self.p()?;
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::DegeneratePrior(p));
        }
        let tables = self.report_tables();
        let (mut mu0, mut mu1) = (0.0, 0.0);
        for (i, table) in tables.iter().enumerate() {
            for (s, joint) in self.expert_marginal(i).iter().enumerate() {
                if let Some(r) = &table[s] {
                    mu0 += joint[0] / (1.0 - p) * r[1];
                    mu1 += joint[1] / p * r[0];
                }
            }
        }
        let n = self.n() as f64;
        Ok((mu0 / n, mu1 / n))
    }

    /// `E[r_i/(1-r_i) | w = 0]` and `E[(1-r_i)/r_i | w = 1]` for expert `i`.
    fn expected_odds(&self, i: usize) -> Result<(f64, f64)> {
        let p = self.p()?;
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::DegeneratePrior(p));
        }
        let tables = self.report_tables();
        let (mut e0, mut e1) = (0.0, 0.0);
        for (s, joint) in self.expert_marginal(i).iter().enumerate() {
            if let Some(r) = &tables[i][s] {
                if joint[0] > 0.0 {
                    e0 += joint[0] / (1.0 - p) * odds(r[1]);
                }
                if joint[1] > 0.0 {
                    e1 += joint[1] / p * inv_odds(r[1]);
                }
            }
        }
        Ok((e0, e1))
    }
}

/// Full joint table over (joint signal, outcome).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    n: usize,
    signal_sizes: Vec<usize>,
    k: usize,
    prob: Vec<f64>,
}

impl DiscreteJoint {
    /// Validates and renormalizes a flat table (see module docs for layout).
    pub fn build(n: usize, signal_sizes: Vec<usize>, k: usize, prob: Vec<f64>) -> Result<Self> {
        check_shape(n, &signal_sizes, k)?;
        let cells = cell_count(&signal_sizes, k);
        if cells != prob.len() as u128 {
            return Err(Error::DimensionMismatch(format!("table has {} cells, shape needs {cells}", prob.len())));
        }
        let prob = normalize(&prob, "joint table")?;
        Ok(Self { n, signal_sizes, k, prob })
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn signal_count(&self) -> usize {
        self.prob.len() / self.k
    }

    /// `P(s, w)` for joint signal `s`.
    pub fn cell(&self, s: &[usize], w: usize) -> f64 {
        let lin = s.iter().zip(&self.signal_sizes).fold(0usize, |acc, (&x, &m)| acc * m + x);
        self.prob[lin * self.k + w]
    }

    /// Joint signal for lexicographic index `lin`.
    pub fn decode(&self, mut lin: usize) -> Vec<usize> {
        let mut s = vec![0; self.n];
        for i in (0..self.n).rev() {
            s[i] = lin % self.signal_sizes[i];
            lin /= self.signal_sizes[i];
        }
        s
    }
}

impl InfoStructure for DiscreteJoint {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn signal_sizes(&self) -> &[usize] {
        &self.signal_sizes
    }

    fn expert_marginal(&self, i: usize) -> Vec<Vec<f64>> {
        let stride: usize = self.signal_sizes[i + 1..].iter().product();
        let m = self.signal_sizes[i];
        let mut out = vec![vec![0.0; self.k]; m];
        for (lin, row) in self.prob.chunks(self.k).enumerate() {
            let s_i = (lin / stride) % m;
            for (acc, x) in out[s_i].iter_mut().zip(row) {
                *acc += x;
            }
        }
        out
    }

    fn for_each_signal(&self, cap: u128, visit: &mut dyn FnMut(&[usize], &[f64])) -> Result<()> {
        check_cap(&self.signal_sizes, self.k, cap)?;
        let mut sig = vec![0; self.n];
        for row in self.prob.chunks(self.k) {
            if row.iter().sum::<f64>() > 0.0 {
                visit(&sig, row);
            }
            odometer_step(&mut sig, &self.signal_sizes);
        }
        Ok(())
    }

    fn draw(&self, t: usize, rng: &mut Rng) -> Result<Vec<(Vec<usize>, usize)>> {
        let dist = WeightedIndex::new(&self.prob).map_err(|e| Error::NotADistribution(e.to_string()))?;
        Ok((0..t)
            .map(|_| {
                let cell = dist.sample(rng);
                (self.decode(cell / self.k), cell % self.k)
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("joint(n={},m={:?},k={})", self.n, self.signal_sizes, self.k)
    }
}

/// Prior over outcomes plus per-expert conditionals `cond[i][w][s_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CondIndepModel {
    prior: Vec<f64>,
    cond: Vec<Vec<Vec<f64>>>,
    signal_sizes: Vec<usize>,
}

impl CondIndepModel {
    pub fn build(prior: Vec<f64>, cond: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let k = prior.len();
        OutcomeSpace::new(k)?;
        if cond.is_empty() {
            return Err(Error::DimensionMismatch("need at least one expert".into()));
        }
        let prior = normalize(&prior, "prior")?;
        let mut signal_sizes = Vec::with_capacity(cond.len());
        let mut table = Vec::with_capacity(cond.len());
        for (i, per_outcome) in cond.iter().enumerate() {
            if per_outcome.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "expert {i} has {} conditionals for {k} outcomes",
                    per_outcome.len()
                )));
            }
            let m = per_outcome[0].len();
            if m == 0 || per_outcome.iter().any(|v| v.len() != m) {
                return Err(Error::DimensionMismatch(format!("expert {i} signal sizes differ")));
            }
            signal_sizes.push(m);
            table.push(
                per_outcome
                    .iter()
                    .enumerate()
                    .map(|(w, v)| normalize(v, &format!("P(s_{i} | w={w})")))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self { prior, cond: table, signal_sizes })
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// `P(s_i | w)` indexed `[i][w][s_i]`.
    pub fn cond(&self) -> &[Vec<Vec<f64>>] {
        &self.cond
    }

    pub fn to_joint(&self) -> Result<DiscreteJoint> {
        self.to_joint_capped(DEFAULT_CELL_CAP)
    }

    /// Product-measure joint table.
    pub fn to_joint_capped(&self, cap: u128) -> Result<DiscreteJoint> {
        let k = self.k();
        let signals = check_cap(&self.signal_sizes, k, cap)?;
        let mut prob = Vec::with_capacity(signals * k);
        let mut sig = vec![0; self.n()];
        for _ in 0..signals {
            prob.extend(self.masses(&sig));
            odometer_step(&mut sig, &self.signal_sizes);
        }
        DiscreteJoint::build(self.n(), self.signal_sizes.clone(), k, prob)
    }

    fn masses(&self, sig: &[usize]) -> impl Iterator<Item = f64> + '_ {
        let sig = sig.to_vec();
        (0..self.k()).map(move |w| sig.iter().enumerate().fold(self.prior[w], |acc, (i, &s)| acc * self.cond[i][w][s]))
    }
}

impl InfoStructure for CondIndepModel {
    fn n(&self) -> usize {
        self.cond.len()
    }

    fn k(&self) -> usize {
        self.prior.len()
    }

    fn signal_sizes(&self) -> &[usize] {
        &self.signal_sizes
    }

    fn expert_marginal(&self, i: usize) -> Vec<Vec<f64>> {
        (0..self.signal_sizes[i]).map(|s| (0..self.k()).map(|w| self.prior[w] * self.cond[i][w][s]).collect()).collect()
    }

    fn for_each_signal(&self, cap: u128, visit: &mut dyn FnMut(&[usize], &[f64])) -> Result<()> {
        let signals = check_cap(&self.signal_sizes, self.k(), cap)?;
        let mut sig = vec![0; self.n()];
        let mut row = vec![0.0; self.k()];
        for _ in 0..signals {
            for (slot, m) in row.iter_mut().zip(self.masses(&sig)) {
                *slot = m;
            }
            if row.iter().sum::<f64>() > 0.0 {
                visit(&sig, &row);
            }
            odometer_step(&mut sig, &self.signal_sizes);
        }
        Ok(())
    }

    fn draw(&self, t: usize, rng: &mut Rng) -> Result<Vec<(Vec<usize>, usize)>> {
        let bad = |e: rand::distr::weighted::Error| Error::NotADistribution(e.to_string());
        let outcome = WeightedIndex::new(&self.prior).map_err(bad)?;
        // Outcomes with zero prior are never drawn, so their tables may be absent.
        let signals = self
            .cond
            .iter()
            .map(|per| per.iter().map(|v| WeightedIndex::new(v).ok()).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        Ok((0..t)
            .map(|_| {
                let w = outcome.sample(rng);
                let sig =
                    signals.iter().map(|per| per[w].as_ref().expect("conditional with mass").sample(rng)).collect();
                (sig, w)
            })
            .collect())
    }

    fn describe(&self) -> String {
        format!("cond_indep(n={},m={:?},k={})", self.n(), self.signal_sizes, self.k())
    }
}

/// Either kind of model, as read from or written to a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub enum Model {
    Joint(DiscreteJoint),
    CondIndep(CondIndepModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Joint { n: usize, signal_sizes: Vec<usize>, k: usize, prob: Vec<f64> },
    CondIndep { n: usize, signal_sizes: Vec<usize>, k: usize, prior: Vec<f64>, cond: Vec<Vec<Vec<f64>>> },
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        match f {
            ModelFile::Joint { n, signal_sizes, k, prob } => {
                Ok(Model::Joint(DiscreteJoint::build(n, signal_sizes, k, prob)?))
            }
            ModelFile::CondIndep { n, signal_sizes, k, prior, cond } => {
                let m = CondIndepModel::build(prior, cond)?;
                if m.n() != n || m.k() != k || m.signal_sizes() != signal_sizes.as_slice() {
                    return Err(Error::DimensionMismatch(
                        "declared n, k or signal_sizes disagree with the tables".into(),
                    ));
                }
                Ok(Model::CondIndep(m))
            }
        }
    }
}

impl From<Model> for ModelFile {
    fn from(m: Model) -> Self {
        match m {
            Model::Joint(j) => ModelFile::Joint { n: j.n, signal_sizes: j.signal_sizes, k: j.k, prob: j.prob },
            Model::CondIndep(c) => {
                ModelFile::CondIndep { n: c.n(), k: c.k(), signal_sizes: c.signal_sizes, prior: c.prior, cond: c.cond }
            }
        }
    }
}

impl Model {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn to_joint(&self) -> Result<DiscreteJoint> {
        match self {
            Model::Joint(j) => Ok(j.clone()),
            Model::CondIndep(c) => c.to_joint(),
        }
    }

    pub fn as_cond_indep(&self) -> Option<&CondIndepModel> {
        match self {
            Model::CondIndep(c) => Some(c),
            Model::Joint(_) => None,
        }
    }

    fn inner(&self) -> &dyn InfoStructure {
        match self {
            Model::Joint(j) => j,
            Model::CondIndep(c) => c,
        }
    }
}

impl From<DiscreteJoint> for Model {
    fn from(j: DiscreteJoint) -> Self {
        Model::Joint(j)
    }
}

impl From<CondIndepModel> for Model {
    fn from(c: CondIndepModel) -> Self {
        Model::CondIndep(c)
    }
}

impl InfoStructure for Model {
    fn n(&self) -> usize {
        self.inner().n()
    }

    fn k(&self) -> usize {
        self.inner().k()
    }

    fn signal_sizes(&self) -> &[usize] {
        match self {
            Model::Joint(j) => &j.signal_sizes,
            Model::CondIndep(c) => &c.signal_sizes,
        }
    }

    fn expert_marginal(&self, i: usize) -> Vec<Vec<f64>> {
        self.inner().expert_marginal(i)
    }

    fn for_each_signal(&self, cap: u128, visit: &mut dyn FnMut(&[usize], &[f64])) -> Result<()> {
        self.inner().for_each_signal(cap, visit)
    }

    fn draw(&self, t: usize, rng: &mut Rng) -> Result<Vec<(Vec<usize>, usize)>> {
        self.inner().draw(t, rng)
    }

    fn describe(&self) -> String {
        self.inner().describe()
    }
}

/// One (profile, outcome) observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub profile: ReportProfile,
    pub omega: usize,
}

/// Ordered i.i.d. records with their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    n: usize,
    k: usize,
    records: Vec<Record>,
    pub seed: Option<u64>,
    pub source: String,
}

impl SampleSet {
    pub fn new(n: usize, k: usize, records: Vec<Record>, seed: Option<u64>, source: String) -> Result<Self> {
        OutcomeSpace::new(k)?;
        for r in &records {
            if r.omega >= k {
                return Err(Error::DimensionMismatch(format!("outcome {} with k = {k}", r.omega)));
            }
            if r.profile.n() != n || r.profile.k() != k {
                return Err(Error::DimensionMismatch("record profile shape".into()));
            }
        }
        Ok(Self { n, k, records, seed, source })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Number of records per outcome.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for r in &self.records {
            c[r.omega] += 1;
        }
        c
    }

    /// Records `[start, end)` as their own set.
    pub fn slice(&self, start: usize, end: usize) -> SampleSet {
        SampleSet {
            n: self.n,
            k: self.k,
            records: self.records[start..end.min(self.len())].to_vec(),
            seed: self.seed,
            source: self.source.clone(),
        }
    }

    /// CSV with header `trial,omega,r_1,..` (binary) or `trial,omega,r_1_1,..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["trial".to_string(), "omega".to_string()];
        for i in 1..=self.n {
            if self.k == 2 {
                header.push(format!("r_{i}"));
            } else {
                header.extend((1..=self.k).map(|j| format!("r_{i}_{j}")));
            }
        }
        out.write_record(&header).map_err(csv_err)?;
        for (t, rec) in self.records.iter().enumerate() {
            let mut row = vec![t.to_string(), rec.omega.to_string()];
            if self.k == 2 {
                row.extend(rec.profile.binary_reports().iter().map(|x| x.to_string()));
            } else {
                row.extend(rec.profile.data().iter().map(|x| x.to_string()));
            }
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads either header form; `k` is inferred from the column names.
    pub fn read_csv<R: Read>(r: R, source: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "trial" || &header[1] != "omega" {
            return Err(Error::Parse("expected header trial,omega,r_...".into()));
        }
        let cols: Vec<Vec<usize>> = header
            .iter()
            .skip(2)
            .map(|h| {
                h.strip_prefix("r_")
                    .ok_or_else(|| Error::Parse(format!("bad column {h}")))?
                    .split('_')
                    .map(|x| x.parse::<usize>().map_err(|_| Error::Parse(format!("bad column {h}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let binary = cols.iter().all(|c| c.len() == 1);
        let (n, k) = if binary {
            (cols.len(), 2)
        } else {
            let k = cols.iter().map(|c| c.get(1).copied().unwrap_or(0)).max().unwrap_or(0);
            (cols.len() / k.max(1), k)
        };
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(csv_err)?;
            let omega: usize = row[1].parse().map_err(|_| Error::Parse(format!("bad omega {}", &row[1])))?;
            let vals = row
                .iter()
                .skip(2)
                .map(|x| x.parse::<f64>().map_err(|_| Error::Parse(format!("bad report {x}"))))
                .collect::<Result<Vec<_>>>()?;
            let profile = if binary { ReportProfile::from_binary(&vals)? } else { ReportProfile::new(n, k, vals)? };
            records.push(Record { profile, omega });
        }
        SampleSet::new(n, k, records, None, source.to_string())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_expert() -> CondIndepModel {
        CondIndepModel::build(vec![0.5, 0.5], vec![vec![vec![0.4, 0.6], vec![0.8, 0.2]]; 2]).unwrap()
    }

    #[test]
    fn uniform_joint_has_half_prior() {
        let j = DiscreteJoint::build(2, vec![2, 2], 2, vec![0.125; 8]).unwrap();
        assert!((j.p().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_and_short_tables() {
        let mut t = vec![0.125; 8];
        t[0] = -0.1;
        assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, t), Err(Error::NotADistribution(_))));
        let t = vec![0.9 / 8.0; 8];
        assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, t), Err(Error::NotADistribution(_))));
        assert!(matches!(DiscreteJoint::build(2, vec![2, 2], 2, vec![0.25; 4]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let j = DiscreteJoint::build(1, vec![2], 2, vec![0.25 + 1e-7, 0.25, 0.25, 0.25]).unwrap();
        assert!((j.prob().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn product_cell_and_report() {
        let m = two_expert();
        let j = m.to_joint().unwrap();
        assert!((j.cell(&[0, 0], 1) - 0.32).abs() < 1e-15);
        let r = m.expert_report(0, 0).unwrap();
        assert!((r[1] - 2.0 / 3.0).abs() < 1e-15);
        let rj = j.expert_report(0, 0).unwrap();
        assert!((rj[1] - r[1]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_prior() {
        let m = CondIndepModel::build(vec![1.0, 0.0], vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]]).unwrap();
        assert!(matches!(m.rho(), Err(Error::DegeneratePrior(_))));
        assert_eq!(m.expert_report(0, 1).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn zero_signal_rejected() {
        let m = CondIndepModel::build(vec![0.5, 0.5], vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]]).unwrap();
        assert!(matches!(m.expert_report(0, 1), Err(Error::ZeroProbabilitySignal { .. })));
    }

    #[test]
    fn cap_guard() {
        let m = CondIndepModel::build(vec![0.5, 0.5], vec![vec![vec![0.25; 4]; 2]; 30]).unwrap();
        assert!(matches!(m.to_joint(), Err(Error::SupportTooLarge { .. })));
        assert!(matches!(m.report_support(), Err(Error::SupportTooLarge { .. })));
    }

    #[test]
    fn xor_support_collapses() {
        // w = s1 xor s2 with uniform signals
        let mut prob = vec![0.0; 8];
        for s1 in 0..2 {
            for s2 in 0..2 {
                prob[(s1 * 2 + s2) * 2 + (s1 ^ s2)] = 0.25;
            }
        }
        let j = DiscreteJoint::build(2, vec![2, 2], 2, prob).unwrap();
        let sup = j.report_support().unwrap();
        assert_eq!(sup.entries.len(), 1);
        assert_eq!(sup.entries[0].profile.binary_reports(), vec![0.5, 0.5]);
        assert!((sup.entries[0].mass[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_empty_at_zero() {
        let m = two_expert();
        assert!(m.sample(0, 1).unwrap().is_empty());
        assert_eq!(m.sample(50, 9).unwrap(), m.sample(50, 9).unwrap());
        assert_ne!(m.sample(50, 9).unwrap(), m.sample(50, 10).unwrap());
    }

    #[test]
    fn csv_round_trip_both_headers() {
        let m = two_expert();
        let s = m.sample(20, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial,omega,r_1,r_2\n"));
        let back = SampleSet::read_csv(&buf[..], "x").unwrap();
        assert_eq!(back.records(), s.records());

        let three =
            CondIndepModel::build(vec![0.2, 0.3, 0.5], vec![vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![0.7, 0.3]]])
                .unwrap();
        let s3 = three.sample(10, 4).unwrap();
        let mut buf = Vec::new();
        s3.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("trial,omega,r_1_1,r_1_2,r_1_3\n"));
        assert_eq!(SampleSet::read_csv(&buf[..], "x").unwrap().records(), s3.records());
    }

    #[test]
    fn model_json_round_trip() {
        let m: Model = two_expert().into();
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let j: Model = two_expert().to_joint().unwrap().into();
        assert_eq!(Model::from_json(&j.to_json()).unwrap(), j);
        assert!(Model::from_json(r#"{"kind":"joint","n":1,"signal_sizes":[2],"k":2,"prob":[0.5,0.5,0.5]}"#).is_err());
    }
}
