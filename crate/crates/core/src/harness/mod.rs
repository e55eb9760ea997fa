//! Experiment orchestration: sample-complexity curves, property batteries and
//! coverage drills.

mod config;
mod curve;
mod lemmas;

pub use config::{Evaluation, ExperimentConfig, LearnerSpec, ModelSource, OutputPaths, Schedule};
pub use curve::{
    closed_form_optimum, quantile, run_curve, write_curve_csv, CurveResult, CurveRow, CurveSummary, FailedCell,
    TSummary,
};
pub use lemmas::{run_lemma_suite, Assertion, BatteryReport, BATTERIES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::{estimate_rho, rho_sample_size};
use crate::error::Result;
use crate::model::{InfoStructure, Model};
use crate::rng;

/// Outcome of repeated `estimate_rho` runs at the proof's sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoCoverage {
    pub rho: f64,
    pub samples: usize,
    pub trials: usize,
    /// Trials with `|rho_hat - rho| / rho <= 4 delta_acc`.
    pub covered: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl RhoCoverage {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.trials as f64
    }
}

/// Runs `estimate_rho` on `trials` fresh sample sets of the prescribed size.
pub fn rho_coverage(model: &Model, delta_acc: f64, delta: f64, trials: usize, seed: u64) -> Result<RhoCoverage> {
    let rho = model.rho()?;
    let (mu0, _) = model.mu()?;
    let samples = rho_sample_size(model.p()?, mu0, model.n(), delta_acc, delta);
    let errs: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = model.sample(samples, rng::cell_seed(seed, 0, t as u64)).ok()?;
            estimate_rho(&s).ok().map(|e| (e.rho_hat - rho).abs() / rho)
        })
        .collect();
    let ok: Vec<f64> = errs.iter().flatten().copied().collect();
    Ok(RhoCoverage {
        rho,
        samples,
        trials,
        covered: ok.iter().filter(|&&e| e <= 4.0 * delta_acc).count(),
        failures: trials - ok.len(),
        max_rel_error: ok.iter().cloned().fold(0.0, f64::max),
    })
}
