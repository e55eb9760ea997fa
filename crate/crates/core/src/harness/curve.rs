use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Evaluation, ExperimentConfig};
use crate::aggregators::{Aggregator, Params};
use crate::error::{Error, Result};
use crate::metrics::{expected_gap_mc, expected_loss_mc, loss_on_support};
use crate::model::{InfoStructure, Model, ReportSupport, SampleSet};
use crate::rng;

/// One `(T, trial)` cell. `gap` and `loss` are absent when the cell failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub trial: usize,
    pub gap: Option<f64>,
    pub loss: Option<f64>,
    /// Learned scalar parameter, when the learner has one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TSummary {
    #[serde(rename = "T")]
    pub t: usize,
    pub completed: usize,
    pub failures: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub q10: Option<f64>,
    pub q90: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    #[serde(rename = "T")]
    pub t: usize,
    pub trial: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub schema_version: String,
    pub learner: String,
    pub model: String,
    pub evaluation: Evaluation,
    pub seed: u64,
    pub trials: usize,
    pub per_t: Vec<TSummary>,
    pub failures: usize,
    pub failed_cells: Vec<FailedCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveResult {
    pub rows: Vec<CurveRow>,
    pub summary: CurveSummary,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(t: usize, rows: &[&CurveRow]) -> TSummary {
    let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    gaps.sort_by(f64::total_cmp);
    let failures = rows.len() - gaps.len();
    let stat = |f: &dyn Fn(&[f64]) -> f64| (!gaps.is_empty()).then(|| f(&gaps));
    TSummary {
        t,
        completed: gaps.len(),
        failures,
        median: stat(&|g| quantile(g, 0.5)),
        mean: stat(&|g| g.iter().sum::<f64>() / g.len() as f64),
        q10: stat(&|g| quantile(g, 0.1)),
        q90: stat(&|g| quantile(g, 0.9)),
    }
}

enum Evaluator {
    Exact(ReportSupport),
    MonteCarlo { held_out: SampleSet, optimum: Aggregator },
}

impl Evaluator {
    fn new(model: &Model, mode: &Evaluation, seed: u64) -> Result<Self> {
        Ok(match mode {
            Evaluation::Exact => Self::Exact(model.report_support()?),
            Evaluation::MonteCarlo { budget } => {
                let held_out = model.sample(*budget, rng::splitmix64(seed ^ rng::splitmix64(u64::MAX)))?;
                Self::MonteCarlo { held_out, optimum: closed_form_optimum(model)? }
            }
        })
    }

    fn gap_and_loss(&self, f: &Aggregator) -> Result<(f64, f64)> {
        match self {
            Self::Exact(support) => {
                let r = loss_on_support(support, f)?;
                Ok((r.gap.unwrap_or(f64::NAN), r.loss))
            }
            Self::MonteCarlo { held_out, optimum } => {
                let (gap, _) = expected_gap_mc(held_out, f, optimum)?;
                Ok((gap, expected_loss_mc(held_out, f)?.loss))
            }
        }
    }
}

/// `f*` without enumerating the support when the model allows it.
pub fn closed_form_optimum(model: &Model) -> Result<Aggregator> {
    match model.as_cond_indep() {
        Some(ci) if ci.k() == 2 => Aggregator::bordley(ci.rho()?, ci.n()),
        Some(ci) => {
            let e = (ci.n() - 1) as f64;
            if ci.prior().iter().any(|&q| q <= 0.0) {
                return Err(Error::DegeneratePrior(0.0));
            }
            Aggregator::multi_bordley(ci.prior().iter().map(|&q| q.powf(-e)).collect())
        }
        None => Aggregator::bayes_optimal(model),
    }
}

/// Runs every `(T, trial)` cell of `config` against `model`. Cells run in
/// parallel; rows come back in grid order. A failing cell is recorded and
/// does not stop the others.
pub fn run_curve(config: &ExperimentConfig, model: &Model) -> Result<CurveResult> {
    config.validate()?;
    let schedule = config.schedule.values()?;
    let evaluator = Evaluator::new(model, &config.evaluation, config.seed)?;
    let oracle = match config.learner {
        super::LearnerSpec::BayesOptimal => Some(Aggregator::bayes_optimal(model)?),
        _ => None,
    };
    let cells: Vec<(usize, usize, usize)> =
        schedule.iter().enumerate().flat_map(|(ti, &t)| (0..config.trials).map(move |trial| (ti, t, trial))).collect();
    let rows: Vec<CurveRow> = cells
        .par_iter()
        .map(|&(ti, t, trial)| {
            let cell = || -> Result<(f64, f64, Option<f64>)> {
                let samples = model.sample(t, rng::cell_seed(config.seed, ti as u64, trial as u64))?;
                let f = config.learner.train(&samples, oracle.as_ref())?;
                let (gap, loss) = evaluator.gap_and_loss(&f)?;
                let theta = match f.params() {
                    Params::Theta { theta, .. } => Some(*theta),
                    _ => None,
                };
                Ok((gap, loss, theta))
            };
            match cell() {
                Ok((gap, loss, theta)) => CurveRow { t, trial, gap: Some(gap), loss: Some(loss), theta, error: None },
                Err(e) => CurveRow { t, trial, gap: None, loss: None, theta: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let per_t = schedule.iter().map(|&t| summarize(t, &rows.iter().filter(|r| r.t == t).collect::<Vec<_>>())).collect();
    let failed_cells: Vec<FailedCell> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| FailedCell { t: r.t, trial: r.trial, error: e.clone() }))
        .collect();
    let summary = CurveSummary {
        schema_version: "1".into(),
        learner: config.learner.name().into(),
        model: model.describe(),
        evaluation: config.evaluation.clone(),
        seed: config.seed,
        trials: config.trials,
        per_t,
        failures: failed_cells.len(),
        failed_cells,
    };
    Ok(CurveResult { rows, summary })
}

/// `T,trial,gap,loss` with empty fields for failed cells.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut w: W) -> Result<()> {
    writeln!(w, "T,trial,gap,loss")?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(w, "{},{},{},{}", r.t, r.trial, opt(r.gap), opt(r.loss))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn csv_marks_failures() {
        let rows = vec![
            CurveRow { t: 10, trial: 0, gap: Some(0.5), loss: Some(0.25), theta: None, error: None },
            CurveRow { t: 10, trial: 1, gap: None, loss: None, theta: None, error: Some("x".into()) },
        ];
        let mut out = Vec::new();
        write_curve_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "T,trial,gap,loss\n10,0,0.5,0.25\n10,1,,\n");
    }
}
