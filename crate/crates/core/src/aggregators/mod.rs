//! Aggregators: maps from a report profile to a distribution over outcomes.
//!
//! Binary kinds compute the scalar `P(w = 1)` and are wrapped as `(1 - v, v)`.
//! Likelihood products are accumulated as sums of logs; a report of exactly
//! 0 or 1 contributes an infinite factor that is tracked separately.

mod learners;
mod search;

pub use learners::{
    empirical_bayes, empirical_bayes_sample_size, erm_empirical, erm_empirical_with_default, erm_theta, estimate_rho,
    fit_multi_theta, fit_theta, mean_regime_test, multi_erm_theta, regime_sample_size, rho_sample_size, strong_budget,
    strongly_informative_learn, weak_sample_size, weakly_informative_learn, MultiThetaFit, Regime, RhoEstimate,
    StrongBudget, ThetaFit,
};
pub use search::{LogitGrid, ThetaGrid};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{InfoStructure, ProfileKey, ReportProfile, ROW_TOL};

/// Anything that turns a report profile into a forecast over `k` outcomes.
pub trait Forecast {
    fn k(&self) -> usize;
    fn forecast(&self, r: &ReportProfile) -> Result<Vec<f64>>;
}

/// Adapts a closure into a [`Forecast`].
pub struct FnForecast<F>(pub usize, pub F);

impl<F> Forecast for FnForecast<F>
where
    F: Fn(&ReportProfile) -> Result<Vec<f64>>,
{
    fn k(&self) -> usize {
        self.0
    }

    fn forecast(&self, r: &ReportProfile) -> Result<Vec<f64>> {
        (self.1)(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    BayesOptimal,
    Averaging,
    BordleyTheta,
    EmpiricalErm,
    EmpiricalBayes,
    StrongInformative,
    WeakInformative,
    MultiTheta,
}

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::BayesOptimal => "bayes_optimal",
            Self::Averaging => "averaging",
            Self::BordleyTheta => "bordley_theta",
            Self::EmpiricalErm => "empirical_erm",
            Self::EmpiricalBayes => "empirical_bayes",
            Self::StrongInformative => "strong_informative",
            Self::WeakInformative => "weak_informative",
            Self::MultiTheta => "multi_theta",
        }
    }
}

/// One row of a lookup-table aggregator.
#[derive(Clone, Debug, PartialEq)]
pub struct TableEntry {
    pub profile: ReportProfile,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LookupTable {
    entries: Vec<TableEntry>,
    index: HashMap<ProfileKey, usize>,
}

impl LookupTable {
    pub fn new(entries: Vec<TableEntry>) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| (e.profile.key(), i)).collect();
        Self { entries, index }
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn get(&self, r: &ReportProfile) -> Option<&[f64]> {
        self.index.get(&r.key()).map(|&i| self.entries[i].output.as_slice())
    }
}

/// Count-and-threshold rule learned for strongly informative experts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub n: usize,
    pub rho_hat: f64,
    pub u: usize,
    pub threshold: f64,
    pub a: f64,
}

impl ThresholdRule {
    /// Number of reports classified as pointing to outcome `u`.
    pub fn count(&self, r: &ReportProfile) -> usize {
        (0..r.n())
            .filter(|&i| {
                let o = crate::model::odds(r.binary(i));
                if self.u == 1 {
                    o > self.rho_hat
                } else {
                    o < self.rho_hat
                }
            })
            .count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    None,
    Theta { n: usize, theta: f64 },
    ThetaVec { theta: Vec<f64> },
    Table(LookupTable),
    Threshold(ThresholdRule),
}

/// A forecast rule plus how it was built.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregator {
    kind: AggregatorKind,
    k: usize,
    params: Params,
    default_output: Vec<f64>,
}

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be positive and finite, got {theta}")));
    }
    Ok(())
}

/// `1 / (1 + theta^(n-1) prod (1 - r_i) / r_i)` with the 0/1 report conventions.
pub fn bordley_value(theta: f64, r: &[f64]) -> Result<f64> {
    let mut log_prod = (r.len() as f64 - 1.0) * theta.ln();
    let (mut zero_factor, mut inf_factor) = (false, false);
    for &ri in r {
        if ri <= 0.0 {
            inf_factor = true;
        } else if ri >= 1.0 {
            zero_factor = true;
        } else {
            log_prod += (-ri).ln_1p() - ri.ln();
        }
    }
    match (zero_factor, inf_factor) {
        (true, true) => Err(Error::ContradictoryReports),
        (_, true) => Ok(0.0),
        (true, false) => Ok(1.0),
        (false, false) => Ok(logistic(-log_prod)),
    }
}

/// `theta_j prod_i r_ij / sum_l theta_l prod_i r_il`, evaluated in log space.
pub fn multi_bordley_value(log_theta: &[f64], r: &ReportProfile) -> Result<Vec<f64>> {
    let k = log_theta.len();
    let mut logs = log_theta.to_vec();
    for row in r.rows() {
        for (acc, x) in logs.iter_mut().zip(row) {
            *acc += x.ln();
        }
    }
    softmax(&logs).ok_or(Error::AllZeroLikelihood).inspect(|v| debug_assert_eq!(v.len(), k))
}

/// Normalized `exp(logs)`; None when every entry is `-inf`.
pub(crate) fn softmax(logs: &[f64]) -> Option<Vec<f64>> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let e: Vec<f64> = logs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    Some(e.into_iter().map(|x| x / s).collect())
}

impl Aggregator {
    /// Lookup table of `P(w | r)` over the model's report support.
    pub fn bayes_optimal<M: InfoStructure + ?Sized>(model: &M) -> Result<Self> {
        let support = model.report_support()?;
        let entries =
            support.entries.into_iter().map(|e| TableEntry { output: e.posterior(), profile: e.profile }).collect();
        Ok(Self::from_table(AggregatorKind::BayesOptimal, model.k(), entries, uniform(model.k())))
    }

    /// Binary Bordley aggregator with parameter `theta`.
    pub fn bordley(theta: f64, n: usize) -> Result<Self> {
        Self::theta_kind(AggregatorKind::BordleyTheta, theta, n)
    }

    pub(crate) fn theta_kind(kind: AggregatorKind, theta: f64, n: usize) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { kind, k: 2, params: Params::Theta { n, theta }, default_output: uniform(2) })
    }

    /// Multi-outcome Bordley aggregator with weights `theta`.
    pub fn multi_bordley(theta: Vec<f64>) -> Result<Self> {
        let k = theta.len();
        if k < 2 {
            return Err(Error::DimensionMismatch("theta needs at least two entries".into()));
        }
        for &t in &theta {
            check_theta(t)?;
        }
        Ok(Self { kind: AggregatorKind::MultiTheta, k, params: Params::ThetaVec { theta }, default_output: uniform(k) })
    }

    /// Column means of the report matrix.
    pub fn averaging(k: usize) -> Self {
        Self { kind: AggregatorKind::Averaging, k, params: Params::None, default_output: uniform(k) }
    }

    /// Lookup-table aggregator; unseen profiles get `default_output`
    /// except for `bayes_optimal`, which refuses them.
    pub fn from_table(kind: AggregatorKind, k: usize, entries: Vec<TableEntry>, default_output: Vec<f64>) -> Self {
        Self { kind, k, params: Params::Table(LookupTable::new(entries)), default_output }
    }

    pub(crate) fn threshold(rule: ThresholdRule) -> Self {
        Self {
            kind: AggregatorKind::StrongInformative,
            k: 2,
            params: Params::Threshold(rule),
            default_output: uniform(2),
        }
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn default_output(&self) -> &[f64] {
        &self.default_output
    }

    /// The Bordley parameter, for theta-family kinds.
    pub fn theta(&self) -> Option<f64> {
        match self.params {
            Params::Theta { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// Forecast as a distribution over the `k` outcomes.
    pub fn apply(&self, r: &ReportProfile) -> Result<Vec<f64>> {
        if r.k() != self.k {
            return Err(Error::DimensionMismatch(format!("profile k = {}, aggregator k = {}", r.k(), self.k)));
        }
        let binary = |v: f64| vec![1.0 - v, v];
        match &self.params {
            Params::None => {
                let n = r.n() as f64;
                let mut out = vec![0.0; self.k];
                for row in r.rows() {
                    for (acc, x) in out.iter_mut().zip(row) {
                        *acc += x / n;
                    }
                }
                Ok(out)
            }
            Params::Theta { n, theta } => {
                check_n(*n, r)?;
                bordley_value(*theta, &r.binary_reports()).map(binary)
            }
            Params::ThetaVec { theta } => {
                let log_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
                multi_bordley_value(&log_theta, r)
            }
            Params::Table(table) => match table.get(r) {
                Some(out) => Ok(out.to_vec()),
                None if self.kind == AggregatorKind::BayesOptimal => Err(Error::UnseenProfile),
                None => Ok(self.default_output.clone()),
            },
            Params::Threshold(rule) => {
                check_n(rule.n, r)?;
                let v = if rule.count(r) as f64 > rule.threshold { rule.u } else { 1 - rule.u };
                Ok(binary(v as f64))
            }
        }
    }

    /// `P(w = 1)` for binary aggregators.
    pub fn apply_binary(&self, r: &ReportProfile) -> Result<f64> {
        if self.k != 2 {
            return Err(Error::DimensionMismatch("scalar output needs k = 2".into()));
        }
        self.apply(r).map(|v| v[1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("aggregator serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_n(n: usize, r: &ReportProfile) -> Result<()> {
    if r.n() != n {
        return Err(Error::DimensionMismatch(format!("profile has {} experts, aggregator expects {n}", r.n())));
    }
    Ok(())
}

impl Forecast for Aggregator {
    fn k(&self) -> usize {
        self.k
    }

    fn forecast(&self, r: &ReportProfile) -> Result<Vec<f64>> {
        self.apply(r)
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    kind: AggregatorKind,
    params: Value,
    default_output: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WireEntry {
    profile: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Serialize for Aggregator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let params = match &self.params {
            Params::None => json!({}),
            Params::Theta { n, theta } => json!({ "n": n, "theta": theta }),
            Params::ThetaVec { theta } => json!({ "theta": theta }),
            Params::Table(t) => {
                let table: Vec<WireEntry> = t
                    .entries()
                    .iter()
                    .map(|e| WireEntry { profile: e.profile.rounded_rows(), output: e.output.clone() })
                    .collect();
                json!({ "k": self.k, "table": table })
            }
            Params::Threshold(rule) => serde_json::to_value(rule).expect("rule serializes"),
        };
        Wire { kind: self.kind, params, default_output: self.default_output.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Aggregator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = Wire::deserialize(d)?;
        decode(w).map_err(D::Error::custom)
    }
}

fn decode(w: Wire) -> Result<Aggregator> {
    #[derive(Deserialize)]
    struct ThetaP {
        n: usize,
        theta: f64,
    }
    #[derive(Deserialize)]
    struct VecP {
        theta: Vec<f64>,
    }
    #[derive(Deserialize)]
    struct TableP {
        k: usize,
        table: Vec<WireEntry>,
    }
    let k = w.default_output.len();
    let s: f64 = w.default_output.iter().sum();
    if k < 2 || (s - 1.0).abs() > ROW_TOL {
        return Err(Error::NotADistribution("default_output".into()));
    }
    let mut agg = match w.kind {
        AggregatorKind::Averaging => Aggregator::averaging(k),
        AggregatorKind::BordleyTheta | AggregatorKind::WeakInformative => {
            let p: ThetaP = serde_json::from_value(w.params)?;
            Aggregator::theta_kind(w.kind, p.theta, p.n)?
        }
        AggregatorKind::MultiTheta => {
            let p: VecP = serde_json::from_value(w.params)?;
            Aggregator::multi_bordley(p.theta)?
        }
        AggregatorKind::StrongInformative => Aggregator::threshold(serde_json::from_value(w.params)?),
        AggregatorKind::BayesOptimal | AggregatorKind::EmpiricalErm | AggregatorKind::EmpiricalBayes => {
            let p: TableP = serde_json::from_value(w.params)?;
            let entries = p
                .table
                .into_iter()
                .map(|e| {
                    let n = e.profile.len();
                    let profile = ReportProfile::new(n, p.k, e.profile.concat())?;
                    Ok(TableEntry { profile, output: e.output })
                })
                .collect::<Result<Vec<_>>>()?;
            Aggregator::from_table(w.kind, p.k, entries, w.default_output.clone())
        }
    };
    if agg.k != k {
        return Err(Error::DimensionMismatch("default_output length disagrees with kind".into()));
    }
    agg.default_output = w.default_output;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CondIndepModel;

    fn bin(r: &[f64]) -> ReportProfile {
        ReportProfile::from_binary(r).unwrap()
    }

    #[test]
    fn bordley_examples() {
        let f = Aggregator::bordley(1.0, 2).unwrap();
        assert!((f.apply_binary(&bin(&[2.0 / 3.0, 2.0 / 3.0])).unwrap() - 0.8).abs() < 1e-12);
        let p = 0.3;
        let g = Aggregator::bordley(p / (1.0 - p), 4).unwrap();
        assert!((g.apply_binary(&bin(&[p; 4])).unwrap() - p).abs() < 1e-12);
        assert_eq!(g.apply_binary(&bin(&[0.0, 0.4, 0.9, 0.2])).unwrap(), 0.0);
        assert_eq!(g.apply_binary(&bin(&[1.0, 0.4, 0.9, 0.2])).unwrap(), 1.0);
        assert_eq!(g.apply_binary(&bin(&[1.0, 0.0, 0.9, 0.2])), Err(Error::ContradictoryReports));
        assert!(Aggregator::bordley(0.0, 2).is_err());
        assert!(Aggregator::bordley(f64::NAN, 2).is_err());
    }

    #[test]
    fn averaging_examples() {
        let f = Aggregator::averaging(2);
        assert_eq!(f.apply_binary(&bin(&[0.0, 1.0])).unwrap(), 0.5);
        assert!((f.apply_binary(&bin(&[0.3; 5])).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn multi_bordley_uniform_rows_follow_theta() {
        let f = Aggregator::multi_bordley(vec![1.0, 2.0, 5.0]).unwrap();
        let r = ReportProfile::new(2, 3, vec![1.0 / 3.0; 6]).unwrap();
        let out = f.apply(&r).unwrap();
        for (o, e) in out.iter().zip([0.125, 0.25, 0.625]) {
            assert!((o - e).abs() < 1e-12);
        }
        let z = ReportProfile::new(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(f.apply(&z), Err(Error::AllZeroLikelihood));
    }

    #[test]
    fn multi_bordley_reduces_to_binary() {
        let (p, n) = (0.35f64, 3);
        let multi = Aggregator::multi_bordley(vec![1.0 / (1.0 - p).powi(n - 1), 1.0 / p.powi(n - 1)]).unwrap();
        let binary = Aggregator::bordley(p / (1.0 - p), n as usize).unwrap();
        for r in [[0.2, 0.5, 0.9], [0.7, 0.7, 0.1], [0.01, 0.99, 0.5]] {
            let a = multi.apply(&bin(&r)).unwrap()[1];
            let b = binary.apply_binary(&bin(&r)).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bayes_optimal_single_expert_echoes_report() {
        let m = CondIndepModel::build(vec![0.4, 0.6], vec![vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]]]).unwrap();
        let f = Aggregator::bayes_optimal(&m).unwrap();
        for s in 0..3 {
            let r = m.expert_report(0, s).unwrap();
            let out = f.apply(&ReportProfile::new(1, 2, r.clone()).unwrap()).unwrap();
            assert!((out[1] - r[1]).abs() < 1e-12);
        }
        assert_eq!(f.apply(&bin(&[0.123])), Err(Error::UnseenProfile));
    }

    #[test]
    fn json_round_trip_every_params_shape() {
        let m = CondIndepModel::build(vec![0.4, 0.6], vec![vec![vec![0.5, 0.5], vec![0.1, 0.9]]; 2]).unwrap();
        let aggs = vec![
            Aggregator::averaging(2),
            Aggregator::bordley(0.7, 2).unwrap(),
            Aggregator::multi_bordley(vec![1.0, 3.0]).unwrap(),
            Aggregator::bayes_optimal(&m).unwrap(),
            Aggregator::threshold(ThresholdRule { n: 2, rho_hat: 0.8, u: 1, threshold: 0.5, a: 0.1 }),
        ];
        for a in aggs {
            let back = Aggregator::from_json(&a.to_json()).unwrap();
            assert_eq!(back.kind(), a.kind());
            let r = bin(&[m.expert_report(0, 1).unwrap()[1], m.expert_report(1, 0).unwrap()[1]]);
            let (x, y) = (a.apply(&r).unwrap(), back.apply(&r).unwrap());
            assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        let v: Value = serde_json::from_str(&Aggregator::averaging(2).to_json()).unwrap();
        assert_eq!(v["kind"], "averaging");
        assert!(v.get("params").is_some() && v.get("default_output").is_some());
    }
}
