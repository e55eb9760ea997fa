//! Fixed-seed fixtures shared by the benchmarks.

use aggrlab::generators::random_cond_indep;
use aggrlab::rng::substream;
use aggrlab::{CondIndepModel, InfoStructure, ReportProfile, SampleSet};

/// Binary conditionally independent model with `n` experts of `m` signals.
pub fn model(n: usize, m: usize) -> CondIndepModel {
    random_cond_indep(n, m, 2, (0.2, 0.8), &mut substream(1, "bench", n as u64 * 100 + m as u64))
        .expect("fixture parameters are valid")
}

pub fn samples(model: &CondIndepModel, t: usize) -> SampleSet {
    model.sample(t, 2).expect("fixture model samples")
}

/// Report profiles of the first `count` samples.
pub fn profiles(model: &CondIndepModel, count: usize) -> Vec<ReportProfile> {
    samples(model, count).records().iter().map(|r| r.profile.clone()).collect()
}
