//! Distances between discrete distributions and aggregation losses.
//!
//! Losses use the normalized squared error `(1/k) sum_j (f_j - 1[w = j])^2`,
//! which is the plain `(f - w)^2` when `k = 2`.

use serde::{Deserialize, Serialize};

use crate::aggregators::Forecast;
use crate::error::{Error, Result};
use crate::model::{InfoStructure, ReportProfile, ReportSupport, SampleSet, ROW_TOL};

/// Probability vector over labelled atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    labels: Vec<u64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(labels: Vec<u64>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() {
            return Err(Error::DimensionMismatch("labels and probabilities differ in length".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NotADistribution("negative or non-finite mass".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > ROW_TOL {
            return Err(Error::NotADistribution(format!("masses sum to {s}")));
        }
        Ok(Self { labels, probs })
    }

    /// Atoms labelled `0..len`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Self::new((0..probs.len() as u64).collect(), probs)
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn co_indexed(&self, other: &DiscreteDist) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::SupportMismatch(format!("{} vs {} atoms or differing labels", self.len(), other.len())));
        }
        Ok(())
    }
}

/// `(1/2) sum |d1 - d2|`.
pub fn tv_distance(d1: &DiscreteDist, d2: &DiscreteDist) -> Result<f64> {
    d1.co_indexed(d2)?;
    Ok(half_l1(d1.probs(), d2.probs()).min(1.0))
}

/// `(1/2) sum |a - b|` on raw, possibly unnormalized, tables.
pub fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// `1 - sum sqrt(d1 d2)`.
pub fn hellinger_sq(d1: &DiscreteDist, d2: &DiscreteDist) -> Result<f64> {
    d1.co_indexed(d2)?;
    let bc: f64 = d1.probs().iter().zip(d2.probs()).map(|(x, y)| (x * y).sqrt()).sum();
    Ok((1.0 - bc).clamp(0.0, 1.0))
}

/// Squared Hellinger distance between `T`-fold i.i.d. products.
pub fn hellinger_sq_iid_product(h2: f64, t: u64) -> f64 {
    let out = match t {
        0 => 0.0,
        1 => h2,
        _ => 1.0 - (1.0 - h2).powf(t as f64),
    };
    debug_assert!(out <= t as f64 * h2 + 1e-12);
    out
}

/// Normalized squared loss of `f` against outcome `w`.
pub fn record_loss(f: &[f64], w: usize) -> f64 {
    let k = f.len() as f64;
    f.iter()
        .enumerate()
        .map(|(j, x)| {
            let y = if j == w { 1.0 } else { 0.0 };
            (x - y) * (x - y)
        })
        .sum::<f64>()
        / k
}

/// Normalized squared distance between two forecasts.
pub fn forecast_distance(f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / f.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Loss of an aggregator, optionally against the optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub optimal_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gap_direct: Option<f64>,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stderr: Option<f64>,
}

/// Exact loss, optimal loss and both forms of the gap.
///
/// Fails with [`Error::GapIdentity`] if `L(f) - L(f*)` and `E|f - f*|^2`
/// disagree by more than 1e-9.
pub fn expected_loss_exact<M: InfoStructure + ?Sized>(model: &M, f: &dyn Forecast) -> Result<LossReport> {
    loss_on_support(&model.report_support()?, f)
}

/// [`expected_loss_exact`] on an already enumerated support.
pub fn loss_on_support(support: &ReportSupport, f: &dyn Forecast) -> Result<LossReport> {
    if f.k() != support.k {
        return Err(Error::DimensionMismatch(format!("aggregator k = {}, model k = {}", f.k(), support.k)));
    }
    let (mut loss, mut opt, mut direct) = (0.0, 0.0, 0.0);
    for e in &support.entries {
        let out = f.forecast(&e.profile)?;
        let post = e.posterior();
        for (w, m) in e.mass.iter().enumerate() {
            loss += m * record_loss(&out, w);
            opt += m * record_loss(&post, w);
        }
        direct += e.total() * forecast_distance(&out, &post);
    }
    let gap = loss - opt;
    if (gap - direct).abs() > 1e-9 {
        return Err(Error::GapIdentity { gap, direct });
    }
    Ok(LossReport {
        loss,
        optimal_loss: Some(opt),
        gap: Some(gap),
        gap_direct: Some(direct),
        method: Method::Exact,
        stderr: None,
    })
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Empirical loss on held-out samples; stderr uses the `T - 1` variance.
pub fn expected_loss_mc(samples: &SampleSet, f: &dyn Forecast) -> Result<LossReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let per = samples
        .records()
        .iter()
        .map(|r| f.forecast(&r.profile).map(|out| record_loss(&out, r.omega)))
        .collect::<Result<Vec<_>>>()?;
    let (loss, stderr) = mean_stderr(&per);
    Ok(LossReport {
        loss,
        optimal_loss: None,
        gap: None,
        gap_direct: None,
        method: Method::MonteCarlo,
        stderr: Some(stderr),
    })
}

/// Monte-Carlo estimate of `E|f - f*|^2` given a reference optimum.
pub fn expected_gap_mc(samples: &SampleSet, f: &dyn Forecast, optimum: &dyn Forecast) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let per = samples
        .records()
        .iter()
        .map(|r| Ok(forecast_distance(&f.forecast(&r.profile)?, &optimum.forecast(&r.profile)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_stderr(&per))
}

/// Empirical loss of `f` on `samples` without error bars.
pub fn empirical_loss(samples: &SampleSet, f: &dyn Forecast) -> Result<f64> {
    expected_loss_mc(samples, f).map(|r| r.loss)
}

/// Evaluates `f` on a single profile and returns its loss against `w`.
pub fn profile_loss(f: &dyn Forecast, r: &ReportProfile, w: usize) -> Result<f64> {
    Ok(record_loss(&f.forecast(r)?, w))
}
